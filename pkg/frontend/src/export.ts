/** GeoJSON export helpers: summarize and package the /polygons payload. */

export interface ExportSummary {
  features: number;
  vertices: number;
  text: string;
}

interface Geometry {
  type: string;
  coordinates: number[][][];
}

interface Feature {
  type: string;
  geometry: Geometry;
}

export function summarizeGeojson(fc: unknown): ExportSummary {
  const obj = fc as { type?: string; features?: Feature[] };
  if (!obj || obj.type !== "FeatureCollection" || !Array.isArray(obj.features)) {
    throw new Error("not a FeatureCollection");
  }
  let vertices = 0;
  for (const f of obj.features) {
    for (const ring of f.geometry.coordinates) {
      vertices += ring.length - 1; // closing vertex repeats the first
    }
  }
  return {
    features: obj.features.length,
    vertices,
    text: JSON.stringify(fc),
  };
}

export function downloadName(sessionId: string, version: number): string {
  return `footprints-${sessionId.slice(0, 8)}-v${version}.geojson`;
}
