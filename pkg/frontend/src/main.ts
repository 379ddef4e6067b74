/** Entry point: wire the store, control panel, and 3D view to a session.
 *
 * Query parameters (paths are resolved by the service, not the browser):
 *   ?recording=...&hand=...[&profile=...][&api=http://host:port]
 */

import { SessionClient } from "./api.js";
import { Panel } from "./panel.js";
import { PanelStore } from "./store.js";
import { View3d } from "./view3d.js";

const params = new URLSearchParams(window.location.search);
const api = params.get("api") ?? window.location.origin;
const recording = params.get("recording");
const hand = params.get("hand");
const profile = params.get("profile") ?? undefined;

const panelRoot = document.getElementById("panel") as HTMLElement;
const canvas = document.getElementById("viewport") as HTMLCanvasElement;

const store = new PanelStore(new SessionClient(api));
new Panel(store, panelRoot);
const view = new View3d(canvas);

store.subscribe((v) => {
  if (v.payload !== null) {
    view.update(v.payload);
  }
});

window.addEventListener("resize", () => view.resize());

if (recording === null || hand === null) {
  const usage = document.createElement("div");
  usage.className = "banner";
  usage.textContent =
    "missing query parameters: ?recording=<path>&hand=<path> " +
    "(paths are read by the service process)";
  panelRoot.prepend(usage);
} else {
  void store.bind(recording, hand, { profile });
}
