/**
 * Canvas wiring for the editing UI. All decisions live in the pure modules
 * (state, outline, stroke, export); this file is the thin DOM layer.
 */
import { ApiClient } from "./api.js";
import { summarizeGeojson, downloadName } from "./export.js";
import { labelAt, regionOutline } from "./outline.js";
import { GrayImage } from "./png16.js";
import { Action, initialState, reduce, ViewState } from "./state.js";
import { Gesture, StrokeQueue } from "./stroke.js";

const BASE = (window as { SPGRAPH_BASE?: string }).SPGRAPH_BASE ?? "http://localhost:8787";

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

class App {
  private api = new ApiClient(BASE);
  private state: ViewState = initialState();
  private labels: GrayImage | null = null;
  private mask: GrayImage | null = null;
  private image: HTMLImageElement | null = null;
  private queue: StrokeQueue | null = null;
  private gesture: Gesture | null = null;
  private canvas = $("canvas") as HTMLCanvasElement;

  private dispatch(action: Action): void {
    this.state = reduce(this.state, action);
    this.render();
  }

  async open(file: File): Promise<void> {
    const bytes = new Uint8Array(await file.arrayBuffer());
    let b64 = "";
    for (let i = 0; i < bytes.length; i += 0x8000) {
      b64 += String.fromCharCode(...bytes.subarray(i, i + 0x8000));
    }
    try {
      const info = await this.api.createSession(btoa(b64));
      this.dispatch({ kind: "session-created", sessionId: info.session_id, version: info.version });
      this.queue = new StrokeQueue(this.api, info.session_id);
      this.labels = await this.api.getSuperpixels(info.session_id);
      this.mask = (await this.api.getMask(info.session_id)).image;
      this.image = new Image();
      this.image.src = URL.createObjectURL(file);
      await this.image.decode();
      this.canvas.width = this.labels.width;
      this.canvas.height = this.labels.height;
      this.render();
    } catch (e) {
      this.dispatch({ kind: "server-error", message: String(e) });
    }
  }

  private canvasPos(ev: PointerEvent): [number, number] {
    const r = this.canvas.getBoundingClientRect();
    return [
      ((ev.clientX - r.left) / r.width) * this.canvas.width,
      ((ev.clientY - r.top) / r.height) * this.canvas.height,
    ];
  }

  bind(): void {
    this.canvas.addEventListener("pointermove", (ev) => {
      const [x, y] = this.canvasPos(ev);
      if (this.gesture) {
        this.gesture.add(x, y);
        this.render();
        return;
      }
      this.dispatch({ kind: "hover", node: this.labels ? labelAt(this.labels, x, y) : null });
    });
    this.canvas.addEventListener("pointerleave", () => this.dispatch({ kind: "hover", node: null }));
    this.canvas.addEventListener("pointerdown", (ev) => {
      if (this.state.tool === "pan" || !this.state.sessionId) return;
      this.gesture = new Gesture(this.state.tool, this.state.brushRadius);
      const [x, y] = this.canvasPos(ev);
      this.gesture.add(x, y);
    });
    window.addEventListener("pointerup", () => void this.finishGesture());

    ($("tool-add") as HTMLInputElement).onclick = () => this.dispatch({ kind: "set-tool", tool: "add" });
    ($("tool-delete") as HTMLInputElement).onclick = () => this.dispatch({ kind: "set-tool", tool: "delete" });
    ($("tool-pan") as HTMLInputElement).onclick = () => this.dispatch({ kind: "set-tool", tool: "pan" });
    ($("opacity") as HTMLInputElement).oninput = (ev) =>
      this.dispatch({ kind: "set-opacity", opacity: Number((ev.target as HTMLInputElement).value) });
    ($("brush") as HTMLInputElement).oninput = (ev) =>
      this.dispatch({ kind: "set-brush", radius: Number((ev.target as HTMLInputElement).value) });
    ($("file") as HTMLInputElement).onchange = (ev) => {
      const f = (ev.target as HTMLInputElement).files?.[0];
      if (f) void this.open(f);
    };
    ($("export") as HTMLButtonElement).onclick = () => void this.exportPolygons();
    window.setInterval(() => this.dispatch({ kind: "tick", now: Date.now() }), 250);
  }

  private async finishGesture(): Promise<void> {
    const g = this.gesture;
    this.gesture = null;
    if (!g || !g.points.length || !this.queue || !this.state.sessionId) return;
    const tool = g.action;
    try {
      const res = await this.queue.submit(g.payload());
      this.dispatch({ kind: "stroke-applied", version: res.version, changed: res.changed_nodes, tool, now: Date.now() });
      this.mask = (await this.api.getMask(this.state.sessionId)).image;
      this.render();
    } catch (e) {
      this.dispatch({ kind: "server-error", message: String(e) });
    }
  }

  private async exportPolygons(): Promise<void> {
    if (!this.state.sessionId) return;
    try {
      const fc = await this.api.getPolygons(this.state.sessionId);
      const summary = summarizeGeojson(fc);
      $("status").textContent = summary.features
        ? `exported ${summary.features} features, ${summary.vertices} vertices`
        : "0 features (nothing to export)";
      if (summary.features) {
        const url = URL.createObjectURL(new Blob([summary.text], { type: "application/geo+json" }));
        const a = document.createElement("a");
        a.href = url;
        a.download = downloadName(this.state.sessionId, this.state.version);
        a.click();
        URL.revokeObjectURL(url);
      }
    } catch (e) {
      this.dispatch({ kind: "server-error", message: String(e) });
    }
  }

  private render(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image) ctx.drawImage(this.image, 0, 0);
    if (this.mask) {
      const { width: w, height: h, data } = this.mask;
      const overlay = ctx.createImageData(w, h);
      for (let i = 0; i < data.length; i++) {
        if (data[i]) {
          overlay.data[4 * i] = 64;
          overlay.data[4 * i + 1] = 160;
          overlay.data[4 * i + 2] = 255;
          overlay.data[4 * i + 3] = Math.round(255 * this.state.overlayOpacity);
        }
      }
      void createImageBitmap(overlay).then((bmp) => ctx.drawImage(bmp, 0, 0));
    }
    if (this.labels && this.state.hoverNode !== null) {
      ctx.strokeStyle = "#ffd700";
      ctx.lineWidth = 1;
      ctx.beginPath();
      for (const s of regionOutline(this.labels, this.state.hoverNode)) {
        ctx.moveTo(s.x0, s.y0);
        ctx.lineTo(s.x1, s.y1);
      }
      ctx.stroke();
    }
    if (this.gesture) {
      ctx.strokeStyle = this.gesture.action === "add" ? "#3b6fff" : "#ff4040";
      ctx.lineWidth = this.gesture.radius * 2;
      ctx.lineCap = "round";
      ctx.beginPath();
      this.gesture.points.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
      ctx.stroke();
    }
    $("status").textContent = this.state.error
      ? `error: ${this.state.error}`
      : this.state.sessionId
        ? `session ${this.state.sessionId.slice(0, 8)} v${this.state.version}`
        : "open an image to start";
  }
}

const app = new App();
app.bind();
