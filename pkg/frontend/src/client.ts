// Session client: HTTP session management plus the frame stream. Pose sends
// are rate-limited with latest-wins coalescing (mirroring the server's
// backpressure rule); received frames are dropped if a newer one was shown.

import { RigidTransform } from "./math.js";
import { KIND_COLOR, packRequest, parseReply, Reply } from "./protocol.js";

export interface SessionOptions {
  mode: "oracle" | "learned";
  scene_seed?: number;
  scene_kind?: "object" | "corridor";
  image_size?: number;
  checkpoint?: string;
}

export interface SessionInfo {
  id: string;
  mode: string;
  width: number;
  height: number;
}

export async function createSession(
  baseUrl: string,
  options: SessionOptions,
): Promise<SessionInfo> {
  const resp = await fetch(`${baseUrl}/session`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(options),
  });
  if (!resp.ok) {
    throw new Error(`session create failed: ${resp.status} ${await resp.text()}`);
  }
  return (await resp.json()) as SessionInfo;
}

export async function deleteSession(baseUrl: string, id: string): Promise<void> {
  await fetch(`${baseUrl}/session/${id}`, { method: "DELETE" });
}

/**
 * Keeps frames in sequence order: a frame is displayed only if its sequence
 * number is beyond everything shown so far (stale frames are discarded).
 */
export class FrameSequencer {
  private lastShown = -1;

  accept(seq: number): boolean {
    if (seq <= this.lastShown) return false;
    this.lastShown = seq;
    return true;
  }

  get lastShownSeq(): number {
    return this.lastShown;
  }
}

export type Clock = () => number;

/**
 * Latest-wins pose sender: at most one message per interval; a newer pose
 * submitted while throttled replaces the queued one.
 */
export class PoseSender {
  private seq = 0;
  private lastSent = -Infinity;
  private pending: { pose: RigidTransform; kind: number } | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private send: (data: ArrayBuffer) => void,
    private minIntervalMs = 1000 / 30,
    private clock: Clock = () => performance.now(),
    private schedule: (fn: () => void, ms: number) => ReturnType<typeof setTimeout> = setTimeout,
  ) {}

  submit(pose: RigidTransform, kind: number = KIND_COLOR): number {
    const now = this.clock();
    if (now - this.lastSent >= this.minIntervalMs) {
      return this.sendNow(pose, kind, now);
    }
    this.pending = { pose, kind };
    if (this.timer === null) {
      const wait = this.minIntervalMs - (now - this.lastSent);
      this.timer = this.schedule(() => this.flush(), wait);
    }
    return -1;
  }

  private flush(): void {
    this.timer = null;
    if (!this.pending) return;
    const { pose, kind } = this.pending;
    this.pending = null;
    this.sendNow(pose, kind, this.clock());
  }

  private sendNow(pose: RigidTransform, kind: number, now: number): number {
    const seq = this.seq++;
    this.lastSent = now;
    this.send(packRequest(seq, kind, pose));
    return seq;
  }

  get sentCount(): number {
    return this.seq;
  }
}

export interface StreamHandlers {
  onFrame: (reply: Reply) => void;
  onError?: (message: string) => void;
  onClose?: () => void;
}

export function openStream(
  baseUrl: string,
  sessionId: string,
  handlers: StreamHandlers,
): WebSocket {
  const wsUrl = baseUrl.replace(/^http/, "ws") + `/session/${sessionId}/stream`;
  const ws = new WebSocket(wsUrl);
  ws.binaryType = "arraybuffer";
  const sequencer = new FrameSequencer();
  ws.onmessage = (event) => {
    const reply = parseReply(event.data as ArrayBuffer);
    if (reply.kind === 0) {
      handlers.onError?.(new TextDecoder().decode(reply.payload));
      return;
    }
    if (sequencer.accept(reply.seq)) handlers.onFrame(reply);
  };
  ws.onclose = () => handlers.onClose?.();
  return ws;
}
