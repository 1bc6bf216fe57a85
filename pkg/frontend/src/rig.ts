// Orbit camera rig: drag steers azimuth/elevation, wheel dollies, keys pan.
// The rig is converted to the wire pose (current camera -> source camera)
// against the rig state the session was created with.

import {
  RigidTransform,
  Vec3,
  orbitPose,
  relativeTransform,
} from "./math.js";

export interface CameraRig {
  azimuthDeg: number;
  elevationDeg: number;
  radius: number;
  pan: Vec3;
}

export const ELEVATION_LIMIT_DEG = 89;

export function defaultRig(radius = 3.0): CameraRig {
  return { azimuthDeg: 0, elevationDeg: 0, radius, pan: [0, 0, 0] };
}

export function clampRig(rig: CameraRig): CameraRig {
  return {
    ...rig,
    elevationDeg: Math.min(
      ELEVATION_LIMIT_DEG,
      Math.max(-ELEVATION_LIMIT_DEG, rig.elevationDeg),
    ),
    radius: Math.max(0.2, rig.radius),
  };
}

export function rigPose(rig: CameraRig): RigidTransform {
  return orbitPose(rig.azimuthDeg, rig.elevationDeg, rig.radius, rig.pan);
}

/** Wire pose: maps the current rig camera into the source rig camera. */
export function rigToWirePose(
  current: CameraRig,
  source: CameraRig,
): RigidTransform {
  return relativeTransform(rigPose(current), rigPose(source));
}

export interface DragSensitivity {
  degreesPerPixel: number;
}

export function applyDrag(
  rig: CameraRig,
  dxPixels: number,
  dyPixels: number,
  sensitivity: DragSensitivity = { degreesPerPixel: 0.4 },
): CameraRig {
  return clampRig({
    ...rig,
    azimuthDeg: rig.azimuthDeg + dxPixels * sensitivity.degreesPerPixel,
    elevationDeg: rig.elevationDeg + dyPixels * sensitivity.degreesPerPixel,
  });
}

export function applyWheel(rig: CameraRig, deltaY: number): CameraRig {
  return clampRig({ ...rig, radius: rig.radius * Math.exp(deltaY * 1e-3) });
}

const PAN_STEP = 0.1;

/** Keyboard pan in the ground plane plus vertical (y is down). */
export function applyPanKey(rig: CameraRig, key: string): CameraRig | null {
  const deltas: Record<string, Vec3> = {
    a: [-PAN_STEP, 0, 0],
    d: [PAN_STEP, 0, 0],
    w: [0, 0, PAN_STEP],
    s: [0, 0, -PAN_STEP],
    q: [0, -PAN_STEP, 0],
    e: [0, PAN_STEP, 0],
  };
  const delta = deltas[key];
  if (!delta) return null;
  return {
    ...rig,
    pan: [rig.pan[0] + delta[0], rig.pan[1] + delta[1], rig.pan[2] + delta[2]],
  };
}
