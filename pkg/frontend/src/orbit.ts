/** Orbit control over the bundle's camera presets.
 *
 * Rendering happens server-side with preset cameras, so orbiting means
 * accumulating drag offsets and snapping to the preset whose viewpoint is
 * angularly closest. The console stays a thin client: no client-side
 * projection.
 */

import { CameraPreset } from "./protocol.js";

export interface OrbitAngles {
  azimuth: number; // radians around +y
  elevation: number; // radians above the horizon
}

export function cameraPosition(preset: CameraPreset): [number, number, number] {
  // world position = -R^T t for a world-to-camera transform
  const r = preset.rotation;
  const t = preset.translation;
  return [
    -(r[0][0] * t[0] + r[1][0] * t[1] + r[2][0] * t[2]),
    -(r[0][1] * t[0] + r[1][1] * t[1] + r[2][1] * t[2]),
    -(r[0][2] * t[0] + r[1][2] * t[1] + r[2][2] * t[2]),
  ];
}

export function anglesOf(position: [number, number, number]): OrbitAngles {
  const [x, y, z] = position;
  const horizontal = Math.sqrt(x * x + z * z);
  return { azimuth: Math.atan2(x, z), elevation: Math.atan2(y, horizontal) };
}

function angularDistance(a: OrbitAngles, b: OrbitAngles): number {
  let da = Math.abs(a.azimuth - b.azimuth) % (2 * Math.PI);
  if (da > Math.PI) da = 2 * Math.PI - da;
  const de = Math.abs(a.elevation - b.elevation);
  return da * da + de * de;
}

export class OrbitController {
  angles: OrbitAngles;
  private readonly presetAngles: Map<string, OrbitAngles> = new Map();

  constructor(cameras: Record<string, CameraPreset>, initial: string) {
    for (const [name, preset] of Object.entries(cameras)) {
      this.presetAngles.set(name, anglesOf(cameraPosition(preset)));
    }
    const start = this.presetAngles.get(initial);
    if (!start) throw new Error(`unknown initial camera ${initial}`);
    this.angles = { ...start };
  }

  /** Apply a drag offset (radians) and return the nearest preset name. */
  drag(dAzimuth: number, dElevation: number): string {
    this.angles = {
      azimuth: this.angles.azimuth + dAzimuth,
      elevation: Math.max(-1.4, Math.min(1.4, this.angles.elevation + dElevation)),
    };
    return this.nearestPreset();
  }

  nearestPreset(): string {
    let best = "";
    let bestDist = Infinity;
    for (const [name, angles] of this.presetAngles) {
      const d = angularDistance(this.angles, angles);
      if (d < bestDist) {
        bestDist = d;
        best = name;
      }
    }
    return best;
  }

  snapTo(name: string): void {
    const angles = this.presetAngles.get(name);
    if (!angles) throw new Error(`unknown camera preset ${name}`);
    this.angles = { ...angles };
  }
}
