import { ReviewApi, StalePhaseError, PhaseLockedError } from './api';
import { TriageQueue, bindKeyboard } from './triage';
import { poolBars, renderTrendSvg, trendPoints } from './dashboard';
import type { PhaseSummary } from './types';

const PAGE_SIZE = 20;
const BRUSH_WIDTH = 4;

interface AppState {
    api: ReviewApi;
    phase: PhaseSummary | null;
    queue: TriageQueue | null;
    sessionId: string;
    unbindKeys: (() => void) | null;
}

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing #${id}`);
    return node as T;
}

function setStatus(text: string): void {
    el<HTMLElement>('status').textContent = text;
}

async function refreshDashboard(state: AppState): Promise<void> {
    const phases = await state.api.phases();
    el<HTMLElement>('trend').innerHTML = renderTrendSvg(trendPoints(phases));
    const current = phases[phases.length - 1] ?? null;
    state.phase = current;
    if (!current) return;
    el<HTMLElement>('phase-label').textContent = `phase ${current.index}`;
    el<HTMLElement>('pools').innerHTML = poolBars(current)
        .map(
            (bar) =>
                `<div class="pool-row"><span class="pool-name">${bar.label}</span>` +
                `<span class="pool-bar" style="width:${(bar.fraction * 100).toFixed(1)}%"></span>` +
                `<span class="pool-count">${bar.count}</span></div>`,
        )
        .join('');
}

function renderCard(state: AppState): void {
    const queue = state.queue;
    const card = queue?.current;
    const imageEl = el<HTMLImageElement>('card-image');
    const overlayEl = el<HTMLImageElement>('card-overlay');
    if (!queue || !card) {
        imageEl.removeAttribute('src');
        overlayEl.removeAttribute('src');
        el<HTMLElement>('card-caption').textContent = 'nothing pending';
        return;
    }
    imageEl.src = card.imageUrl;
    overlayEl.src = card.overlayUrl;
    const verdictLabel = card.decision ?? 'undecided';
    el<HTMLElement>('card-caption').textContent =
        `${card.sampleId} (${queue.cursor + 1}/${queue.cards.length}, ` +
        `${queue.decidedCount} decided) — ${verdictLabel}` +
        (queue.mode === 'annotate' ? ' [annotating: click points, Enter commits]' : '');
    el<HTMLButtonElement>('submit').disabled = !queue.submitReady;
    drawAnnotation(state);
}

function drawAnnotation(state: AppState): void {
    const canvas = el<HTMLCanvasElement>('annotate-canvas');
    const ctx = canvas.getContext('2d');
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const mask = state.queue?.annotationMask(canvas.width, canvas.height);
    if (!mask) return;
    const frame = ctx.createImageData(canvas.width, canvas.height);
    for (let i = 0; i < mask.length; i++) {
        if (!mask[i]) continue;
        frame.data[i * 4] = 255;
        frame.data[i * 4 + 3] = 170;
    }
    ctx.putImageData(frame, 0, 0);
}

async function loadQueue(state: AppState): Promise<void> {
    if (!state.phase) return;
    const page = await state.api.pending(state.phase.index, 0, PAGE_SIZE);
    if (state.unbindKeys) state.unbindKeys();
    state.queue = new TriageQueue(page.items, BRUSH_WIDTH, {
        onDecision: () => renderCard(state),
        onCursor: () => renderCard(state),
        onMode: () => renderCard(state),
    });
    state.unbindKeys = bindKeyboard(state.queue, document);
    renderCard(state);
    setStatus(`${page.total} pending; showing ${page.items.length}. A=accept R=reject E=annotate.`);
}

async function submitBatch(state: AppState): Promise<void> {
    if (!state.phase || !state.queue || !state.queue.submitReady) return;
    try {
        const resp = await state.api.postVerdicts(
            state.phase.index, state.queue.toVerdicts(state.sessionId));
        setStatus(`applied ${resp.results.length} verdicts`);
        await refreshDashboard(state);
        await loadQueue(state);
    } catch (err) {
        if (err instanceof StalePhaseError) {
            setStatus('phase moved on; reloading the current phase');
            await refreshDashboard(state);
            await loadQueue(state);
        } else if (err instanceof PhaseLockedError) {
            setStatus('a retrain is running; try again when it finishes');
        } else {
            setStatus(`submit failed: ${(err as Error).message}`);
        }
    }
}

async function advancePhase(state: AppState): Promise<void> {
    if (!state.phase) return;
    const button = el<HTMLButtonElement>('advance');
    button.disabled = true;
    setStatus('retraining…');
    try {
        const jobId = await state.api.advance(state.phase.index);
        const status = await state.api.pollJob(jobId);
        if (status.status === 'done') {
            setStatus(`advanced to phase ${status.phase_index}`);
            await refreshDashboard(state);
            await loadQueue(state);
        } else {
            setStatus(`advance failed: ${status.error ?? 'unknown error'}`);
        }
    } catch (err) {
        setStatus(`advance failed: ${(err as Error).message}`);
    } finally {
        button.disabled = false;
    }
}

export async function start(): Promise<AppState> {
    const state: AppState = {
        api: new ReviewApi(''),
        phase: null,
        queue: null,
        sessionId: `ui-${Date.now()}-${Math.floor(Math.random() * 1e6)}`,
        unbindKeys: null,
    };
    el<HTMLCanvasElement>('annotate-canvas').addEventListener('click', (event) => {
        const canvas = event.currentTarget as HTMLCanvasElement;
        const box = canvas.getBoundingClientRect();
        const x = ((event.clientX - box.left) / box.width) * canvas.width;
        const y = ((event.clientY - box.top) / box.height) * canvas.height;
        state.queue?.addPoint(x, y);
        drawAnnotation(state);
    });
    el<HTMLButtonElement>('submit').addEventListener('click', () => void submitBatch(state));
    el<HTMLButtonElement>('advance').addEventListener('click', () => void advancePhase(state));
    await refreshDashboard(state);
    await loadQueue(state);
    return state;
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
    void start();
}
