/**
 * View state as a pure reducer: every field is a function of server
 * responses plus local tool settings, so replaying the same actions always
 * reproduces the same view.
 */

export type Tool = "add" | "delete" | "pan";

export interface Highlight {
  nodes: number[];
  tool: "add" | "delete";
  /** ms timestamp after which the flash disappears */
  until: number;
}

export interface ViewState {
  sessionId: string | null;
  version: number;
  tool: Tool;
  brushRadius: number;
  overlayOpacity: number;
  highlight: Highlight | null;
  hoverNode: number | null;
  error: string | null;
}

export const HIGHLIGHT_MS = 1500;

export function initialState(): ViewState {
  return {
    sessionId: null,
    version: 0,
    tool: "add",
    brushRadius: 3,
    overlayOpacity: 0.5,
    highlight: null,
    hoverNode: null,
    error: null,
  };
}

export type Action =
  | { kind: "session-created"; sessionId: string; version: number }
  | { kind: "set-tool"; tool: Tool }
  | { kind: "set-brush"; radius: number }
  | { kind: "set-opacity"; opacity: number }
  | { kind: "hover"; node: number | null }
  | { kind: "stroke-applied"; version: number; changed: number[]; tool: "add" | "delete"; now: number }
  | { kind: "tick"; now: number }
  | { kind: "server-error"; message: string }
  | { kind: "dismiss-error" };

export function reduce(state: ViewState, action: Action): ViewState {
  switch (action.kind) {
    case "session-created":
      return { ...initialState(), tool: state.tool, brushRadius: state.brushRadius,
               overlayOpacity: state.overlayOpacity,
               sessionId: action.sessionId, version: action.version };
    case "set-tool":
      return { ...state, tool: action.tool };
    case "set-brush":
      return { ...state, brushRadius: Math.max(1, Math.round(action.radius)) };
    case "set-opacity":
      return { ...state, overlayOpacity: Math.min(1, Math.max(0, action.opacity)) };
    case "hover":
      return state.hoverNode === action.node ? state : { ...state, hoverNode: action.node };
    case "stroke-applied":
      if (action.version <= state.version) return state; // stale response
      return {
        ...state,
        version: action.version,
        highlight: action.changed.length
          ? { nodes: action.changed, tool: action.tool, until: action.now + HIGHLIGHT_MS }
          : state.highlight,
        error: null,
      };
    case "tick":
      if (state.highlight && state.highlight.until <= action.now) {
        return { ...state, highlight: null };
      }
      return state;
    case "server-error":
      return { ...state, error: action.message };
    case "dismiss-error":
      return { ...state, error: null };
  }
}
