import { mount } from "./app.js";

const root = document.getElementById("app");
if (root) {
  // same-origin deployment: the static host proxies /v1 to the service
  mount(root, { baseUrl: "" });
}
