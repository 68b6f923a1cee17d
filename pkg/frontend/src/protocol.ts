/** Wire types of the render service. */

export interface ModelDescriptor {
  d_body: number;
  k_gamma: number;
  jaw_dims: number;
  eyelid_dims: number;
  joint_names: string[];
  dof_layout: { joint: string; kind: "translation" | "rotation" }[];
  cameras: Record<string, CameraPreset>;
}

export interface CameraPreset {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  rotation: number[][];
  translation: number[];
  width: number;
  height: number;
}

/** Payload of a WS `{"set": ...}` message and of POST /api/render. */
export interface RenderRequest {
  pose: number[];
  expression: { gamma: number[]; jaw: number[]; eyelids: number[] };
  camera: string;
  background: string;
}

export interface FrameMessage {
  type: "frame";
  seq: number;
  timings_ms: { tex: number; pred: number; tra: number; ren: number; total: number };
  png_base64: string;
}

export interface HelloMessage {
  type: "hello";
  d_body: number;
  k_gamma: number;
}

export interface ErrorMessage {
  type: "error";
  error: string;
  detail: string;
}

export type ServerMessage = FrameMessage | HelloMessage | ErrorMessage;

export function parseServerMessage(data: string): ServerMessage {
  const doc = JSON.parse(data);
  if (doc.type === "frame" || doc.type === "hello" || doc.type === "error") {
    return doc as ServerMessage;
  }
  throw new Error(`unknown server message type: ${doc.type}`);
}
