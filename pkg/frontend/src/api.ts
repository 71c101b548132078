/**
 * Typed client for the editing service. All geometry authority stays on the
 * server; this module only moves bytes and JSON. `fetchFn` is injectable so
 * tests can run without a network.
 */
import { decodeGrayPng, GrayImage } from "./png16.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface GraphNode {
  id: number;
  centroid: [number, number];
  area: number;
  prob: number;
}

export interface GraphEdge {
  i: number;
  j: number;
  alpha: number;
}

export interface GraphPayload {
  nodes: GraphNode[];
  edges: GraphEdge[];
  labels: number[];
}

export interface SessionInfo {
  session_id: string;
  n_superpixels: number;
  version: number;
}

export interface StrokeResult {
  version: number;
  changed_nodes: number[];
  mask_url: string;
}

export interface StrokePayload {
  points: [number, number][];
  action: "add" | "delete";
  radius: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function fail(resp: Response): Promise<never> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    if (body && typeof body.error === "string") detail = body.error;
  } catch {
    /* non-JSON body */
  }
  throw new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (u, i) => fetch(u, i),
  ) {}

  async createSession(imageBase64: string): Promise<SessionInfo> {
    const resp = await this.fetchFn(`${this.base}/v1/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ image: imageBase64 }),
    });
    if (resp.status !== 201) await fail(resp);
    return resp.json();
  }

  async getSuperpixels(sid: string): Promise<GrayImage> {
    const resp = await this.fetchFn(`${this.base}/v1/sessions/${sid}/superpixels`);
    if (!resp.ok) await fail(resp);
    return decodeGrayPng(new Uint8Array(await resp.arrayBuffer()));
  }

  async getMask(sid: string): Promise<{ image: GrayImage; version: number }> {
    const resp = await this.fetchFn(`${this.base}/v1/sessions/${sid}/mask`);
    if (!resp.ok) await fail(resp);
    const version = Number(resp.headers.get("X-Session-Version") ?? "0");
    return { image: decodeGrayPng(new Uint8Array(await resp.arrayBuffer())), version };
  }

  async getGraph(sid: string): Promise<GraphPayload> {
    const resp = await this.fetchFn(`${this.base}/v1/sessions/${sid}/graph`);
    if (!resp.ok) await fail(resp);
    return resp.json();
  }

  async getPolygons(sid: string): Promise<unknown> {
    const resp = await this.fetchFn(`${this.base}/v1/sessions/${sid}/polygons`);
    if (!resp.ok) await fail(resp);
    return resp.json();
  }

  async postStroke(sid: string, stroke: StrokePayload): Promise<StrokeResult> {
    const resp = await this.fetchFn(`${this.base}/v1/sessions/${sid}/strokes`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(stroke),
    });
    if (!resp.ok) await fail(resp);
    return resp.json();
  }
}
