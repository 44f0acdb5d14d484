/**
 * Client-side polyline rasterization.
 *
 * This mirrors the server's rasterizer exactly: width-1 lines walk the classic
 * integer line, wider brushes set every pixel whose squared distance to the
 * nearest segment is at most (brush/2)^2. Both sides compute in IEEE doubles
 * with the same operation order, so the produced masks are byte-identical and
 * the annotation preview shown in the browser is the mask the server stores.
 */

export type Point = [number, number];

function walkLine(mask: Uint8Array, width: number, height: number,
                  x0: number, y0: number, x1: number, y1: number): void {
    const dx = Math.abs(x1 - x0);
    const sx = x0 < x1 ? 1 : -1;
    const dy = -Math.abs(y1 - y0);
    const sy = y0 < y1 ? 1 : -1;
    let err = dx + dy;
    for (;;) {
        if (x0 >= 0 && x0 < width && y0 >= 0 && y0 < height) {
            mask[y0 * width + x0] = 1;
        }
        if (x0 === x1 && y0 === y1) return;
        const e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

export function rasterizePolyline(points: Point[], brushWidth: number,
                                  width: number, height: number): Uint8Array {
    const mask = new Uint8Array(width * height);
    if (points.length === 0) return mask;
    const pts: Point[] = points.map(([x, y]) => [Math.floor(x + 0.5), Math.floor(y + 0.5)]);
    if (pts.length === 1) pts.push(pts[0]);

    const t = Math.trunc(brushWidth);
    if (t <= 1) {
        for (let k = 0; k + 1 < pts.length; k++) {
            walkLine(mask, width, height, pts[k][0], pts[k][1], pts[k + 1][0], pts[k + 1][1]);
        }
        return mask;
    }

    const r = t / 2;
    const r2 = r * r;
    const pad = Math.ceil(r);
    for (let k = 0; k + 1 < pts.length; k++) {
        const [x0, y0] = pts[k];
        const [x1, y1] = pts[k + 1];
        const xa = Math.max(0, Math.floor(Math.min(x0, x1)) - pad);
        const xb = Math.min(width - 1, Math.ceil(Math.max(x0, x1)) + pad);
        const ya = Math.max(0, Math.floor(Math.min(y0, y1)) - pad);
        const yb = Math.min(height - 1, Math.ceil(Math.max(y0, y1)) + pad);
        if (xa > xb || ya > yb) continue;
        const dx = x1 - x0;
        const dy = y1 - y0;
        const l2 = dx * dx + dy * dy;
        for (let y = ya; y <= yb; y++) {
            for (let x = xa; x <= xb; x++) {
                let ddx: number;
                let ddy: number;
                if (l2 === 0) {
                    ddx = x - x0;
                    ddy = y - y0;
                } else {
                    let s = ((x - x0) * dx + (y - y0) * dy) / l2;
                    s = Math.min(1.0, Math.max(0.0, s));
                    ddx = x - (x0 + s * dx);
                    ddy = y - (y0 + s * dy);
                }
                if (ddx * ddx + ddy * ddy <= r2) {
                    mask[y * width + x] = 1;
                }
            }
        }
    }
    return mask;
}

/** Indices of the set pixels, for compact comparison and overlay painting. */
export function maskPixels(mask: Uint8Array): number[] {
    const out: number[] = [];
    for (let i = 0; i < mask.length; i++) {
        if (mask[i]) out.push(i);
    }
    return out;
}
