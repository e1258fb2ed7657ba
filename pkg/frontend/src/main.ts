import { CurationApi } from "./api.js";
import { CurationApp } from "./app.js";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
const app = new CurationApp(new CurationApi(fetch.bind(window)), root, document);
void app.init();
