import { ServiceClient } from "./api.js";
import { initExplorer, windowUrlHost } from "./app.js";

window.addEventListener("load", () => {
  const root = document.getElementById("app");
  if (root) {
    void initExplorer(root, new ServiceClient(""), windowUrlHost(window));
  }
});
