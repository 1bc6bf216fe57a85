import { describe, expect, it } from "vitest";

import { maxAbsDiff, orbitPose } from "../src/math.js";
import { TrajectoryRecorder } from "../src/recorder.js";

describe("trajectory record / replay", () => {
  it("captures only while recording", () => {
    const rec = new TrajectoryRecorder();
    rec.capture(orbitPose(1, 0, 3));
    expect(rec.count).toBe(0);
    rec.start();
    rec.capture(orbitPose(2, 0, 3));
    rec.capture(orbitPose(3, 0, 3));
    rec.stop();
    rec.capture(orbitPose(4, 0, 3));
    expect(rec.count).toBe(2);
  });

  it("export round-trips through the shared pose-file format", () => {
    const rec = new TrajectoryRecorder();
    rec.start();
    const poses = [orbitPose(0, 0, 3), orbitPose(10, 5, 3), orbitPose(20, 10, 3)];
    poses.forEach((p) => rec.capture(p));
    rec.stop();
    const text = rec.exportFile();
    expect(text.trim().split("\n").length).toBe(3);
    expect(text.trim().split("\n")[0].split(/\s+/).length).toBe(12);

    const loaded = new TrajectoryRecorder();
    loaded.loadFile(text);
    expect(loaded.count).toBe(3);
    const replayed: ReturnType<typeof orbitPose>[] = [];
    loaded.replay((p) => replayed.push(p), 0, (fn) => {
      fn();
      return 0;
    });
    replayed.forEach((p, i) => expect(maxAbsDiff(p, poses[i])).toBe(0));
  });

  it("replays in recorded order at the scheduled cadence", () => {
    const rec = new TrajectoryRecorder();
    rec.start();
    for (let i = 0; i < 4; i++) rec.capture(orbitPose(i, 0, 3));
    rec.stop();
    const order: number[] = [];
    const pendingTimers: Array<() => void> = [];
    const ok = rec.replay(
      (p) => order.push(p.t[0]),
      50,
      (fn) => {
        pendingTimers.push(fn);
        return 0;
      },
    );
    expect(ok).toBe(true);
    expect(order.length).toBe(1); // first fires immediately
    while (pendingTimers.length) pendingTimers.shift()!();
    expect(order.length).toBe(4);
    const azimuthX = [0, 1, 2, 3].map((a) => orbitPose(a, 0, 3).t[0]);
    expect(order).toEqual(azimuthX);
  });

  it("empty recording replay is a no-op returning false", () => {
    const rec = new TrajectoryRecorder();
    let called = 0;
    expect(rec.replay(() => (called += 1))).toBe(false);
    expect(called).toBe(0);
  });
});
