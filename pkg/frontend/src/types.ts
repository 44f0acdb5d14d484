export type Decision = 'ACCEPT' | 'REJECT' | 'REJECT_WITH_ANNOTATION';

export interface PendingItem {
    sample_id: string;
    image_url: string;
    mask_url: string;
    overlay_url: string;
    dominant_line: { p0: number[]; p1: number[]; votes: number } | null;
}

export interface PendingPage {
    total: number;
    offset: number;
    items: PendingItem[];
}

export interface PoolCounts {
    labeled: number;
    weak: number;
    negative: number;
    pending: number;
}

export interface PhaseSummary {
    index: number;
    pools: PoolCounts;
    metrics: { iou: number; f1: number } | null;
}

export interface VerdictBody {
    sample_id: string;
    decision: Decision;
    polyline?: number[][];
    brush_width?: number;
    session_id?: string;
    reviewer?: string;
}

export interface VerdictResponse {
    results: { sample_id: string; decision: string; applied: boolean }[];
    pools: PoolCounts;
}

export interface JobStatus {
    status: 'running' | 'done' | 'failed';
    phase_index?: number;
    error?: string;
}
