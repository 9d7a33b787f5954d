/**
 * Top-down table rendering: pure math from a world snapshot to a list of
 * draw operations, so the geometry is testable without a canvas. The DOM
 * layer just executes the ops.
 */

import type { WorldSnapshot } from "./api.js";

export interface Viewport {
  width: number;
  height: number;
  pad: number;
}

export interface CircleOp {
  kind: "circle";
  name: string;
  cx: number;
  cy: number;
  r: number;
  color: string;
  outlineOnly: boolean;
  held: boolean;
}

export interface RectOp {
  kind: "rect";
  name: string;
  cx: number;
  cy: number;
  w: number;
  h: number;
  color: string;
  outlineOnly: boolean;
  held: boolean;
}

export type DrawOp = CircleOp | RectOp;

export interface Mapping {
  toPx: (x: number, y: number) => [number, number];
  /** metres-to-pixels scale (uniform; the smaller of the two axes). */
  scale: number;
}

/**
 * Uniform mapping from table coordinates to canvas pixels. World +y points
 * away from the operator, canvas +y points down, so y is flipped.
 */
export function tableMapping(
  extent: [[number, number], [number, number]],
  viewport: Viewport,
): Mapping {
  const [[x0, x1], [y0, y1]] = extent;
  const spanX = x1 - x0;
  const spanY = y1 - y0;
  const scale = Math.min(
    (viewport.width - 2 * viewport.pad) / spanX,
    (viewport.height - 2 * viewport.pad) / spanY,
  );
  const originPxX = viewport.width / 2 - scale * (x0 + x1) / 2;
  const originPxY = viewport.height / 2 + scale * (y0 + y1) / 2;
  return {
    scale,
    toPx: (x, y) => [originPxX + scale * x, originPxY - scale * y],
  };
}

/**
 * Draw ops for every resting object, sorted bottom-up so lids and stacked
 * items paint over their supports. The held object (if any) is drawn last
 * with a marker ring instead of at a table position.
 */
export function sceneOps(world: WorldSnapshot, viewport: Viewport): DrawOp[] {
  const mapping = tableMapping(world.table_extent, viewport);
  const ops: DrawOp[] = [];
  const names = Object.keys(world.objects).sort(
    (a, b) =>
      (world.objects[a]!.position[2] ?? 0) - (world.objects[b]!.position[2] ?? 0),
  );
  for (const name of names) {
    const obj = world.objects[name]!;
    const held = world.gripper === name;
    const [cx, cy] = mapping.toPx(obj.position[0], obj.position[1]);
    const shape = obj.shape;
    const outlineOnly = obj.container;
    if (shape.kind === "box") {
      ops.push({
        kind: "rect",
        name,
        cx,
        cy,
        w: (shape["w"] as number) * mapping.scale,
        h: (shape["d"] as number) * mapping.scale,
        color: obj.color || "#888",
        outlineOnly,
        held,
      });
    } else {
      // cylinder, sphere, disc: all circles from above
      const radius = (shape["r"] as number | undefined) ?? 0.01;
      ops.push({
        kind: "circle",
        name,
        cx,
        cy,
        r: radius * mapping.scale,
        color: obj.color || "#888",
        outlineOnly,
        held,
      });
    }
  }
  // Held object last so its ring is never painted over.
  ops.sort((a, b) => Number(a.held) - Number(b.held));
  return ops;
}
