/**
 * Stroke gesture assembly and a single-in-flight mutation queue: gestures
 * complete locally on pointer-up, but their POSTs are serialized so server
 * versions are strictly increasing even under rapid input.
 */
import { ApiClient, StrokePayload, StrokeResult } from "./api.js";

export class Gesture {
  readonly points: [number, number][] = [];

  constructor(
    readonly action: "add" | "delete",
    readonly radius: number,
    /** drop consecutive samples closer than this, in pixels */
    private minStep = 1.0,
  ) {}

  add(x: number, y: number): void {
    const last = this.points[this.points.length - 1];
    if (last && Math.hypot(x - last[0], y - last[1]) < this.minStep) return;
    this.points.push([x, y]);
  }

  payload(): StrokePayload {
    if (!this.points.length) throw new Error("empty gesture");
    return { points: this.points, action: this.action, radius: this.radius };
  }
}

export class StrokeQueue {
  private chain: Promise<void> = Promise.resolve();

  constructor(private api: ApiClient, private sid: string) {}

  /**
   * Enqueue a stroke; resolves with the server result once every earlier
   * stroke has been acknowledged. Rejections do not break the chain.
   */
  submit(stroke: StrokePayload): Promise<StrokeResult> {
    const result = this.chain.then(() => this.api.postStroke(this.sid, stroke));
    this.chain = result.then(
      () => undefined,
      () => undefined,
    );
    return result;
  }
}
