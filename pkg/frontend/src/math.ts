// Rigid-transform math mirroring the server's camera conventions:
// camera x right, y down, z forward; poses are camera-to-world; the wire
// pose maps current-camera coordinates into the session's source camera.

export type Vec3 = [number, number, number];

export interface RigidTransform {
  r: number[]; // 3x3 row-major
  t: Vec3;
}

export function identity(): RigidTransform {
  return { r: [1, 0, 0, 0, 1, 0, 0, 0, 1], t: [0, 0, 0] };
}

export function matVec(r: number[], v: Vec3): Vec3 {
  return [
    r[0] * v[0] + r[1] * v[1] + r[2] * v[2],
    r[3] * v[0] + r[4] * v[1] + r[5] * v[2],
    r[6] * v[0] + r[7] * v[1] + r[8] * v[2],
  ];
}

export function matMul(a: number[], b: number[]): number[] {
  const out = new Array(9).fill(0);
  for (let i = 0; i < 3; i++) {
    for (let j = 0; j < 3; j++) {
      out[3 * i + j] =
        a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j];
    }
  }
  return out;
}

export function transpose(r: number[]): number[] {
  return [r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]];
}

export function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

export function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

export function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

export function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

export function norm(a: Vec3): number {
  return Math.sqrt(dot(a, a));
}

export function normalize(a: Vec3): Vec3 {
  const n = norm(a);
  if (n < 1e-12) throw new Error("cannot normalize zero vector");
  return scale(a, 1 / n);
}

/** Apply first b, then a. */
export function compose(a: RigidTransform, b: RigidTransform): RigidTransform {
  return { r: matMul(a.r, b.r), t: add(matVec(a.r, b.t), a.t) as Vec3 };
}

export function invert(tr: RigidTransform): RigidTransform {
  const rt = transpose(tr.r);
  return { r: rt, t: scale(matVec(rt, tr.t), -1) as Vec3 };
}

/** Map coordinates in the `from` camera into the `to` camera. */
export function relativeTransform(
  from: RigidTransform,
  to: RigidTransform,
): RigidTransform {
  return compose(invert(to), from);
}

/**
 * Camera-to-world pose of a camera at `pos` looking at `target`; `down` is
 * the world direction camera +y should follow (y points down in-camera).
 */
export function lookAt(
  pos: Vec3,
  target: Vec3,
  down: Vec3 = [0, 1, 0],
): RigidTransform {
  const forward = normalize(sub(target, pos));
  const proj = scale(forward, dot(down, forward));
  const yAxis = normalize(sub(down, proj));
  const xAxis = cross(yAxis, forward);
  return {
    r: [
      xAxis[0], yAxis[0], forward[0],
      xAxis[1], yAxis[1], forward[1],
      xAxis[2], yAxis[2], forward[2],
    ],
    t: pos,
  };
}

export const DEG = Math.PI / 180;

/** Orbit-rig camera pose: look-at-center rig, azimuth about the vertical. */
export function orbitPose(
  azimuthDeg: number,
  elevationDeg: number,
  radius: number,
  center: Vec3 = [0, 0, 0],
): RigidTransform {
  const az = azimuthDeg * DEG;
  const el = elevationDeg * DEG;
  const pos: Vec3 = [
    center[0] + radius * Math.sin(az) * Math.cos(el),
    center[1] - radius * Math.sin(el),
    center[2] - radius * Math.cos(az) * Math.cos(el),
  ];
  return lookAt(pos, center);
}

export function maxAbsDiff(a: RigidTransform, b: RigidTransform): number {
  let worst = 0;
  for (let i = 0; i < 9; i++) worst = Math.max(worst, Math.abs(a.r[i] - b.r[i]));
  for (let i = 0; i < 3; i++) worst = Math.max(worst, Math.abs(a.t[i] - b.t[i]));
  return worst;
}
