/** Control state: every slider and picker the UI exposes.
 *
 * Values are clamped to the declared ranges on every write, and the state
 * serializes to exactly the `set` payload the service accepts, so the UI
 * can never send out-of-range or malformed values.
 */

import { ModelDescriptor, RenderRequest } from "./protocol.js";

export const RANGES = {
  gamma: { min: -3, max: 3 },
  jaw: { min: -0.6, max: 0.6 },
  eyelids: { min: 0, max: 1 },
  rotation: { min: -Math.PI, max: Math.PI },
  translation: { min: -1, max: 1 },
} as const;

export type RangeName = keyof typeof RANGES;

export function clamp(value: number, range: { min: number; max: number }): number {
  if (Number.isNaN(value)) return range.min;
  return Math.min(range.max, Math.max(range.min, value));
}

export interface PoseSlot {
  index: number;
  joint: string;
  kind: "translation" | "rotation";
  axis: 0 | 1 | 2;
}

export class ControlState {
  readonly descriptor: ModelDescriptor;
  pose: number[];
  gamma: number[];
  jaw: number[];
  eyelids: number[];
  camera: string;
  background: string;

  constructor(descriptor: ModelDescriptor) {
    this.descriptor = descriptor;
    this.pose = new Array(descriptor.d_body).fill(0);
    this.gamma = new Array(descriptor.k_gamma).fill(0);
    this.jaw = new Array(descriptor.jaw_dims).fill(0);
    this.eyelids = new Array(descriptor.eyelid_dims).fill(0);
    const presets = Object.keys(descriptor.cameras);
    if (presets.length === 0) throw new Error("model declares no camera presets");
    this.camera = presets[0];
    this.background = "202020";
  }

  poseSlots(): PoseSlot[] {
    const slots: PoseSlot[] = [];
    this.descriptor.dof_layout.forEach((block, b) => {
      for (let axis = 0; axis < 3; axis++) {
        slots.push({ index: 3 * b + axis, joint: block.joint, kind: block.kind, axis: axis as 0 | 1 | 2 });
      }
    });
    return slots;
  }

  setPose(index: number, value: number): void {
    if (index < 0 || index >= this.pose.length) throw new Error(`pose index ${index} out of range`);
    const block = this.descriptor.dof_layout[Math.floor(index / 3)];
    this.pose[index] = clamp(value, RANGES[block.kind]);
  }

  setGamma(index: number, value: number): void {
    if (index < 0 || index >= this.gamma.length) throw new Error(`gamma index ${index} out of range`);
    this.gamma[index] = clamp(value, RANGES.gamma);
  }

  setJaw(index: number, value: number): void {
    if (index < 0 || index >= this.jaw.length) throw new Error(`jaw index ${index} out of range`);
    this.jaw[index] = clamp(value, RANGES.jaw);
  }

  setEyelid(index: number, value: number): void {
    if (index < 0 || index >= this.eyelids.length) throw new Error(`eyelid index ${index} out of range`);
    this.eyelids[index] = clamp(value, RANGES.eyelids);
  }

  setCamera(name: string): void {
    if (!(name in this.descriptor.cameras)) throw new Error(`unknown camera preset ${name}`);
    this.camera = name;
  }

  setBackground(hex: string): void {
    const clean = hex.replace(/^#/, "").toLowerCase();
    if (!/^[0-9a-f]{6}$/.test(clean)) throw new Error(`background must be RRGGBB, got ${hex}`);
    this.background = clean;
  }

  /** The full request payload; also the WS `set` body. */
  toRenderRequest(): RenderRequest {
    return {
      pose: [...this.pose],
      expression: { gamma: [...this.gamma], jaw: [...this.jaw], eyelids: [...this.eyelids] },
      camera: this.camera,
      background: this.background,
    };
  }

  toSetMessage(): { set: RenderRequest } {
    return { set: this.toRenderRequest() };
  }
}
