/** Browser workbench: sliders over the model's expression and pose
 * dimensions, orbit over the camera presets, background picker, and the
 * live frame stream with its per-stage timing panel.
 */

import { DebouncedSender } from "./debounce.js";
import { OrbitController } from "./orbit.js";
import { FrameMessage, ModelDescriptor, RenderRequest } from "./protocol.js";
import { ControlState, RANGES } from "./state.js";
import { StreamClient, StreamStatus } from "./stream.js";

const SERVICE = (window as any).GSAVATAR_SERVICE ?? "";

function el<K extends keyof HTMLElementTagNameMap>(tag: K, cls?: string): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  return node;
}

function slider(
  label: string,
  min: number,
  max: number,
  value: number,
  onChange: (v: number) => void,
): HTMLElement {
  const row = el("div", "slider-row");
  const name = el("label");
  name.textContent = label;
  const input = el("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = "0.01";
  input.value = String(value);
  const readout = el("span", "readout");
  readout.textContent = value.toFixed(2);
  input.addEventListener("input", () => {
    const v = parseFloat(input.value);
    readout.textContent = v.toFixed(2);
    onChange(v);
  });
  row.append(name, input, readout);
  return row;
}

async function boot(): Promise<void> {
  const status = document.getElementById("status")!;
  const frame = document.getElementById("frame") as HTMLImageElement;
  const timings = document.getElementById("timings")!;
  const controls = document.getElementById("controls")!;

  status.textContent = "fetching model description";
  let descriptor: ModelDescriptor;
  try {
    const resp = await fetch(`${SERVICE}/api/model`);
    descriptor = (await resp.json()) as ModelDescriptor;
  } catch (err) {
    status.textContent = `service unreachable: ${err}`;
    setTimeout(boot, 2000);
    return;
  }

  const state = new ControlState(descriptor);
  const orbit = new OrbitController(descriptor.cameras, state.camera);
  const wsUrl = `${SERVICE.replace(/^http/, "ws") || `ws://${location.host}`}/api/stream`;

  const stream = new StreamClient(wsUrl, {
    onFrame: (msg: FrameMessage) => {
      frame.src = `data:image/png;base64,${msg.png_base64}`;
      const t = msg.timings_ms;
      timings.textContent =
        `tex ${t.tex.toFixed(1)} ms | pred ${t.pred.toFixed(1)} ms | ` +
        `tra ${t.tra.toFixed(1)} ms | ren ${t.ren.toFixed(1)} ms | total ${t.total.toFixed(1)} ms`;
    },
    onStatus: (s: StreamStatus) => {
      status.textContent = s === "live" ? "" : `stream: ${s}`;
    },
    onError: (detail) => {
      status.textContent = `server rejected update: ${detail}`;
    },
  });

  const sender = new DebouncedSender<{ set: RenderRequest }>((msg) => stream.sendState(msg), 50);
  const push = () => sender.update(state.toSetMessage());

  const expr = el("fieldset");
  expr.append(el("legend"));
  expr.querySelector("legend")!.textContent = "expression";
  for (let i = 0; i < descriptor.k_gamma; i++) {
    expr.append(
      slider(`gamma ${i}`, RANGES.gamma.min, RANGES.gamma.max, 0, (v) => {
        state.setGamma(i, v);
        push();
      }),
    );
  }
  ["x", "y", "z"].forEach((axis, i) =>
    expr.append(
      slider(`jaw ${axis}`, RANGES.jaw.min, RANGES.jaw.max, 0, (v) => {
        state.setJaw(i, v);
        push();
      }),
    ),
  );
  ["left", "right"].forEach((side, i) =>
    expr.append(
      slider(`eyelid ${side}`, RANGES.eyelids.min, RANGES.eyelids.max, 0, (v) => {
        state.setEyelid(i, v);
        push();
      }),
    ),
  );
  controls.append(expr);

  const poseSet = el("fieldset");
  poseSet.append(el("legend"));
  poseSet.querySelector("legend")!.textContent = "pose";
  for (const slot of state.poseSlots()) {
    const range = RANGES[slot.kind];
    poseSet.append(
      slider(`${slot.joint} ${slot.kind[0]}${"xyz"[slot.axis]}`, range.min, range.max, 0, (v) => {
        state.setPose(slot.index, v);
        push();
      }),
    );
  }
  controls.append(poseSet);

  const view = el("fieldset");
  view.append(el("legend"));
  view.querySelector("legend")!.textContent = "view";
  const cameraSelect = el("select");
  for (const name of Object.keys(descriptor.cameras)) {
    const opt = el("option");
    opt.value = name;
    opt.textContent = name;
    cameraSelect.append(opt);
  }
  cameraSelect.value = state.camera;
  cameraSelect.addEventListener("change", () => {
    state.setCamera(cameraSelect.value);
    orbit.snapTo(cameraSelect.value);
    push();
  });
  const bg = el("input");
  bg.type = "color";
  bg.value = `#${state.background}`;
  bg.addEventListener("input", () => {
    state.setBackground(bg.value);
    push();
  });
  view.append(cameraSelect, bg);
  controls.append(view);

  // Drag on the frame orbits across presets.
  let dragging: { x: number; y: number } | null = null;
  frame.addEventListener("pointerdown", (ev) => {
    dragging = { x: ev.clientX, y: ev.clientY };
  });
  window.addEventListener("pointerup", () => {
    dragging = null;
  });
  window.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const preset = orbit.drag((ev.clientX - dragging.x) * 0.01, (ev.clientY - dragging.y) * 0.01);
    dragging = { x: ev.clientX, y: ev.clientY };
    if (preset !== state.camera) {
      state.setCamera(preset);
      cameraSelect.value = preset;
      push();
    }
  });

  push(); // initial frame
}

boot();
