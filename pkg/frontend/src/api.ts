import type {
    JobStatus, PendingPage, PhaseSummary, VerdictBody, VerdictResponse,
} from './types';

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

/** The current phase moved on (or the sample was already decided elsewhere). */
export class StalePhaseError extends ApiError {}

/** A retrain is running; the phase is read-only until the job finishes. */
export class PhaseLockedError extends ApiError {}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function fail(resp: Response): Promise<never> {
    let message = resp.statusText;
    try {
        const doc = await resp.json();
        if (doc && doc.error) message = doc.error;
    } catch {
        // non-JSON error body; keep the status text
    }
    if (resp.status === 409) throw new StalePhaseError(409, message);
    if (resp.status === 423) throw new PhaseLockedError(423, message);
    throw new ApiError(resp.status, message);
}

export class ReviewApi {
    constructor(private baseUrl: string = '', private fetchFn: FetchLike = fetch) {}

    private async get<T>(path: string): Promise<T> {
        const resp = await this.fetchFn(this.baseUrl + path);
        if (!resp.ok) await fail(resp);
        return resp.json() as Promise<T>;
    }

    private async post<T>(path: string, body?: unknown): Promise<T> {
        const resp = await this.fetchFn(this.baseUrl + path, {
            method: 'POST',
            headers: { 'Content-Type': 'application/json' },
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!resp.ok) await fail(resp);
        return resp.json() as Promise<T>;
    }

    async phases(): Promise<PhaseSummary[]> {
        const doc = await this.get<{ phases: PhaseSummary[] }>('/phases');
        return doc.phases;
    }

    pending(phase: number, offset = 0, limit = 50): Promise<PendingPage> {
        return this.get(`/phases/${phase}/pending?offset=${offset}&limit=${limit}`);
    }

    postVerdicts(phase: number, verdicts: VerdictBody[]): Promise<VerdictResponse> {
        return this.post(`/phases/${phase}/verdicts`, verdicts);
    }

    async advance(phase: number): Promise<string> {
        const doc = await this.post<{ job_id: string }>(`/phases/${phase}/advance`);
        return doc.job_id;
    }

    job(jobId: string): Promise<JobStatus> {
        return this.get(`/jobs/${jobId}`);
    }

    async pollJob(jobId: string, intervalMs = 1000,
                  sleep: (ms: number) => Promise<void> =
                      (ms) => new Promise((r) => setTimeout(r, ms))): Promise<JobStatus> {
        for (;;) {
            const status = await this.job(jobId);
            if (status.status !== 'running') return status;
            await sleep(intervalMs);
        }
    }

    exportPhase(phase: number): Promise<{ phase: number; samples: unknown[] }> {
        return this.get(`/phases/${phase}/export`);
    }
}
