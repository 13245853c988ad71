import { App } from "./app.js";

const root = document.getElementById("root");
if (root === null) throw new Error("missing #root element");
root.appendChild(new App().el);
