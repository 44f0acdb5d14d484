import type { Decision, PendingItem, VerdictBody } from './types';
import { rasterizePolyline, Point } from './raster';

export interface ReviewCard {
    sampleId: string;
    imageUrl: string;
    overlayUrl: string;
    decision: Decision | null;
    polyline: Point[];
}

export type TriageMode = 'triage' | 'annotate';

export interface TriageEvents {
    onDecision?: (card: ReviewCard) => void;
    onCursor?: (index: number) => void;
    onMode?: (mode: TriageMode) => void;
}

/**
 * Keyboard-first review queue. In triage mode A accepts, R rejects, E enters
 * annotate mode for the current card; arrows move without deciding. In
 * annotate mode clicks add polyline points and Enter commits the correction
 * (needs at least two points), Escape discards it.
 */
export class TriageQueue {
    cards: ReviewCard[];
    cursor = 0;
    mode: TriageMode = 'triage';

    constructor(items: PendingItem[], public brushWidth = 4,
                private events: TriageEvents = {}) {
        this.cards = items.map((item) => ({
            sampleId: item.sample_id,
            imageUrl: item.image_url,
            overlayUrl: item.overlay_url,
            decision: null,
            polyline: [],
        }));
    }

    get current(): ReviewCard | undefined {
        return this.cards[this.cursor];
    }

    get decidedCount(): number {
        return this.cards.filter((c) => c.decision !== null).length;
    }

    /** Submit stays disabled until every card carries a decision. */
    get submitReady(): boolean {
        return this.cards.length > 0 && this.decidedCount === this.cards.length;
    }

    handleKey(key: string): boolean {
        const card = this.current;
        if (!card) return false;
        if (this.mode === 'annotate') {
            if (key === 'Enter') return this.commitAnnotation();
            if (key === 'Escape') {
                card.polyline = [];
                this.setMode('triage');
                return true;
            }
            return false;
        }
        switch (key.toLowerCase()) {
            case 'a':
                this.decide('ACCEPT');
                return true;
            case 'r':
                this.decide('REJECT');
                return true;
            case 'e':
                this.setMode('annotate');
                return true;
            case 'arrowright':
                this.moveCursor(1);
                return true;
            case 'arrowleft':
                this.moveCursor(-1);
                return true;
            default:
                return false;
        }
    }

    addPoint(x: number, y: number): void {
        if (this.mode !== 'annotate' || !this.current) return;
        this.current.polyline.push([x, y]);
    }

    /** A correction is only valid with >= 2 points; otherwise stay in annotate mode. */
    commitAnnotation(): boolean {
        const card = this.current;
        if (!card || card.polyline.length < 2) return false;
        card.decision = 'REJECT_WITH_ANNOTATION';
        this.events.onDecision?.(card);
        this.setMode('triage');
        this.moveCursor(1);
        return true;
    }

    decide(decision: Exclude<Decision, 'REJECT_WITH_ANNOTATION'>): void {
        const card = this.current;
        if (!card) return;
        card.decision = decision;
        card.polyline = [];
        this.events.onDecision?.(card);
        this.moveCursor(1);
    }

    private moveCursor(delta: number): void {
        const next = this.cursor + delta;
        if (next >= 0 && next < this.cards.length) {
            this.cursor = next;
            this.events.onCursor?.(this.cursor);
        }
    }

    private setMode(mode: TriageMode): void {
        this.mode = mode;
        this.events.onMode?.(mode);
    }

    /** Preview of the current correction, identical to the server's mask. */
    annotationMask(width: number, height: number): Uint8Array | null {
        const card = this.current;
        if (!card || card.polyline.length < 2) return null;
        return rasterizePolyline(card.polyline, this.brushWidth, width, height);
    }

    /** Decided cards as verdict bodies, in queue order. */
    toVerdicts(sessionId: string, reviewer = 'ui'): VerdictBody[] {
        const out: VerdictBody[] = [];
        for (const card of this.cards) {
            if (card.decision === null) continue;
            const body: VerdictBody = {
                sample_id: card.sampleId,
                decision: card.decision,
                session_id: sessionId,
                reviewer,
            };
            if (card.decision === 'REJECT_WITH_ANNOTATION') {
                body.polyline = card.polyline.map(([x, y]) => [x, y]);
                body.brush_width = this.brushWidth;
            }
            out.push(body);
        }
        return out;
    }
}

/** Route document keydown events into the queue; returns the unbind handle. */
export function bindKeyboard(queue: TriageQueue, doc: Document): () => void {
    const handler = (event: Event) => {
        const key = (event as KeyboardEvent).key;
        if (queue.handleKey(key)) event.preventDefault();
    };
    doc.addEventListener('keydown', handler);
    return () => doc.removeEventListener('keydown', handler);
}
