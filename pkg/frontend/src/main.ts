import { App } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = new App({ fetchImpl: (url, init) => fetch(url, init) });
  void app.mount(root);
}
