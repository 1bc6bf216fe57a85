// Browser entry point: canvas viewer with orbit controls steering the
// frame-synthesis service.

import { createSession, openStream, PoseSender, SessionInfo } from "./client.js";
import { CameraRig, applyDrag, applyPanKey, applyWheel, defaultRig, rigToWirePose } from "./rig.js";
import { KIND_COLOR, KIND_DEPTH } from "./protocol.js";
import { TrajectoryRecorder } from "./recorder.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("view");
const ctx = canvas.getContext("2d")!;
const status = el<HTMLSpanElement>("status");
const connectBtn = el<HTMLButtonElement>("connect");
const depthToggle = el<HTMLInputElement>("depth");
const recordBtn = el<HTMLButtonElement>("record");
const replayBtn = el<HTMLButtonElement>("replay");
const exportBtn = el<HTMLButtonElement>("export");
const serverInput = el<HTMLInputElement>("server");
const seedInput = el<HTMLInputElement>("seed");

let rig: CameraRig = defaultRig();
const sourceRig: CameraRig = defaultRig();
let sender: PoseSender | null = null;
let ws: WebSocket | null = null;
let session: SessionInfo | null = null;
const recorder = new TrajectoryRecorder();

function setStatus(text: string) {
  status.textContent = text;
}

function payloadKind(): number {
  return depthToggle.checked ? KIND_DEPTH : KIND_COLOR;
}

function pushPose() {
  if (!sender) return;
  const pose = rigToWirePose(rig, sourceRig);
  recorder.capture(pose);
  sender.submit(pose, payloadKind());
}

async function drawFrame(payload: Uint8Array) {
  const blob = new Blob([payload.slice()], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  ctx.imageSmoothingEnabled = false;
  ctx.drawImage(bitmap, 0, 0, canvas.width, canvas.height);
}

async function connect() {
  const baseUrl = serverInput.value.replace(/\/$/, "");
  try {
    session = await createSession(baseUrl, {
      mode: "oracle",
      scene_seed: Number(seedInput.value) || 0,
      image_size: 64,
    });
  } catch (err) {
    setStatus(`connection failed: ${err}`);
    return;
  }
  rig = defaultRig();
  ws?.close();
  ws = openStream(baseUrl, session.id, {
    onFrame: (reply) => void drawFrame(reply.payload),
    onError: (message) => setStatus(`server error: ${message}`),
    onClose: () => setStatus("stream closed (reconnect to continue)"),
  });
  ws.onopen = () => {
    sender = new PoseSender((data) => ws!.send(data));
    setStatus(`session ${session!.id.slice(0, 8)} (${session!.width}x${session!.height})`);
    pushPose();
  };
}

connectBtn.onclick = () => void connect();
depthToggle.onchange = pushPose;

let dragging = false;
let last: [number, number] = [0, 0];
canvas.onpointerdown = (e) => {
  dragging = true;
  last = [e.clientX, e.clientY];
  canvas.setPointerCapture(e.pointerId);
};
canvas.onpointerup = () => (dragging = false);
canvas.onpointermove = (e) => {
  if (!dragging) return;
  rig = applyDrag(rig, e.clientX - last[0], e.clientY - last[1]);
  last = [e.clientX, e.clientY];
  pushPose();
};
canvas.onwheel = (e) => {
  e.preventDefault();
  rig = applyWheel(rig, e.deltaY);
  pushPose();
};
window.onkeydown = (e) => {
  const next = applyPanKey(rig, e.key);
  if (next) {
    rig = next;
    pushPose();
  }
};

recordBtn.onclick = () => {
  if (recorder.isRecording) {
    recorder.stop();
    recordBtn.textContent = "record";
    setStatus(`recorded ${recorder.count} poses`);
  } else {
    recorder.start();
    recordBtn.textContent = "stop";
    setStatus("recording trajectory");
  }
};

replayBtn.onclick = () => {
  const ok = recorder.replay((pose) => sender?.submit(pose, payloadKind()), 100);
  setStatus(ok ? "replaying trajectory" : "nothing recorded yet");
};

exportBtn.onclick = () => {
  const text = recorder.exportFile();
  if (!text) {
    setStatus("nothing recorded yet");
    return;
  }
  const blob = new Blob([text], { type: "text/plain" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "trajectory.txt";
  a.click();
  URL.revokeObjectURL(a.href);
};

setStatus("not connected");
