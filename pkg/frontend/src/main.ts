import { createApiClient } from "./api.js";
import { startApp } from "./app.js";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app element");
}
void startApp(root, createApiClient());
