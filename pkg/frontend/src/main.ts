import { ChatApp } from "./app";
import "./style.css";

const base = import.meta.env.VITE_API_BASE ?? "http://127.0.0.1:8008";
const root = document.getElementById("root");
if (!root) throw new Error("missing #root element");
const app = new ChatApp(root, base);
void app.start();
