import { ApiClient } from "./api.js";
import { App } from "./app.js";

// API base: ?api=http://host:port query parameter, else same origin.
const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";
const app = new App(document.getElementById("root") as HTMLElement, new ApiClient(base));
void app.init();
