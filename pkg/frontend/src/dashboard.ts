import type { PhaseSummary } from './types';

export interface TrendPoint {
    phase: number;
    iou: number;
    f1: number;
}

/**
 * Held-out metric trend across phases, in increasing phase order. Phases that
 * have not been evaluated yet (no metrics) are omitted.
 */
export function trendPoints(phases: PhaseSummary[]): TrendPoint[] {
    return phases
        .filter((p) => p.metrics !== null)
        .sort((a, b) => a.index - b.index)
        .map((p) => ({ phase: p.index, iou: p.metrics!.iou, f1: p.metrics!.f1 }));
}

export interface PoolBar {
    label: 'labeled' | 'weak' | 'negative' | 'pending';
    count: number;
    fraction: number;
}

/** Pool sizes of one phase as bar fractions of the total sample count. */
export function poolBars(phase: PhaseSummary): PoolBar[] {
    const pools = phase.pools;
    const total = pools.labeled + pools.weak + pools.negative + pools.pending;
    const labels: PoolBar['label'][] = ['labeled', 'weak', 'negative', 'pending'];
    return labels.map((label) => ({
        label,
        count: pools[label],
        fraction: total === 0 ? 0 : pools[label] / total,
    }));
}

/** Render the trend as an inline SVG polyline (IoU), newest phase rightmost. */
export function renderTrendSvg(points: TrendPoint[], width = 360, height = 120): string {
    if (points.length === 0) {
        return `<svg width="${width}" height="${height}"><text x="8" y="20">no evaluated phases yet</text></svg>`;
    }
    const pad = 14;
    const step = points.length === 1 ? 0 : (width - 2 * pad) / (points.length - 1);
    const coords = points.map((p, i) => {
        const x = pad + i * step;
        const y = height - pad - p.iou * (height - 2 * pad);
        return `${x.toFixed(1)},${y.toFixed(1)}`;
    });
    const dots = points
        .map((p, i) => {
            const [x, y] = coords[i].split(',');
            return `<circle cx="${x}" cy="${y}" r="3"><title>phase ${p.phase}: IoU ${p.iou.toFixed(3)}</title></circle>`;
        })
        .join('');
    return (
        `<svg width="${width}" height="${height}" class="trend">` +
        `<polyline fill="none" stroke="currentColor" points="${coords.join(' ')}"/>` +
        dots +
        '</svg>'
    );
}
