// Binary stream protocol and the shared pose-file text format.
//
// request:  u32 sequence, u32 payload kind, 12 little-endian f64 (row-major
//           [R|t], current camera -> source camera)
// reply:    u32 sequence, u32 payload kind, PNG bytes
// kinds:    1 = color, 2 = depth visualization, 0 = error (UTF-8 payload)

import { RigidTransform, Vec3 } from "./math.js";

export const KIND_ERROR = 0;
export const KIND_COLOR = 1;
export const KIND_DEPTH = 2;

export const REQUEST_BYTES = 8 + 12 * 8;

export function poseToNumbers(pose: RigidTransform): number[] {
  const { r, t } = pose;
  return [
    r[0], r[1], r[2], t[0],
    r[3], r[4], r[5], t[1],
    r[6], r[7], r[8], t[2],
  ];
}

export function numbersToPose(values: number[]): RigidTransform {
  if (values.length !== 12) {
    throw new Error(`pose needs 12 numbers, got ${values.length}`);
  }
  return {
    r: [
      values[0], values[1], values[2],
      values[4], values[5], values[6],
      values[8], values[9], values[10],
    ],
    t: [values[3], values[7], values[11]] as Vec3,
  };
}

export function packRequest(
  seq: number,
  kind: number,
  pose: RigidTransform,
): ArrayBuffer {
  const buffer = new ArrayBuffer(REQUEST_BYTES);
  const view = new DataView(buffer);
  view.setUint32(0, seq, true);
  view.setUint32(4, kind, true);
  poseToNumbers(pose).forEach((v, i) => view.setFloat64(8 + 8 * i, v, true));
  return buffer;
}

export interface Reply {
  seq: number;
  kind: number;
  payload: Uint8Array;
}

export function parseReply(data: ArrayBuffer): Reply {
  if (data.byteLength < 8) throw new Error("reply shorter than header");
  const view = new DataView(data);
  return {
    seq: view.getUint32(0, true),
    kind: view.getUint32(4, true),
    payload: new Uint8Array(data, 8),
  };
}

// -- pose files: one transform per line, 12 whitespace-separated decimals ----

export function poseToLine(pose: RigidTransform): string {
  return poseToNumbers(pose)
    .map((v) => formatNumber(v))
    .join(" ");
}

function formatNumber(v: number): string {
  // shortest round-trip representation, like the server's %.17g
  const s = String(v);
  return s === "0" && Object.is(v, -0) ? "-0" : s;
}

export function posesToFile(poses: RigidTransform[]): string {
  return poses.map(poseToLine).join("\n") + (poses.length ? "\n" : "");
}

export function parsePoseFile(text: string): RigidTransform[] {
  const out: RigidTransform[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (!line) continue;
    const values = line.split(/\s+/).map(Number);
    if (values.some((v) => Number.isNaN(v))) {
      throw new Error(`bad pose line: ${line}`);
    }
    out.push(numbersToPose(values));
  }
  return out;
}
