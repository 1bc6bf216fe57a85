// Trajectory recording and replay. Recorded poses round-trip through the
// shared 12-numbers-per-line pose-file format; replay feeds them back at a
// fixed rate through any sink.

import { RigidTransform } from "./math.js";
import { parsePoseFile, posesToFile } from "./protocol.js";

export class TrajectoryRecorder {
  private poses: RigidTransform[] = [];
  private recording = false;

  start(): void {
    this.poses = [];
    this.recording = true;
  }

  stop(): void {
    this.recording = false;
  }

  get isRecording(): boolean {
    return this.recording;
  }

  capture(pose: RigidTransform): void {
    if (this.recording) this.poses.push(pose);
  }

  get count(): number {
    return this.poses.length;
  }

  exportFile(): string {
    return posesToFile(this.poses);
  }

  loadFile(text: string): void {
    this.poses = parsePoseFile(text);
    this.recording = false;
  }

  /**
   * Feed the recorded poses to `sink` at a fixed rate. Returns false (and
   * feeds nothing) when the recording is empty.
   */
  replay(
    sink: (pose: RigidTransform) => void,
    intervalMs = 100,
    schedule: (fn: () => void, ms: number) => unknown = setTimeout,
  ): boolean {
    if (this.poses.length === 0) return false;
    const poses = [...this.poses];
    let i = 0;
    const step = () => {
      sink(poses[i]);
      i += 1;
      if (i < poses.length) schedule(step, intervalMs);
    };
    step();
    return true;
  }
}
