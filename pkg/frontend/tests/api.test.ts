import { describe, expect, it } from 'vitest';
import { ApiError, PhaseLockedError, ReviewApi, StalePhaseError } from '../src/api';

type Call = { url: string; init?: RequestInit };

function fakeFetch(routes: Record<string, () => Response>, calls: Call[] = []) {
    const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
        calls.push({ url, init });
        const key = `${init?.method ?? 'GET'} ${url}`;
        const handler = routes[key];
        if (!handler) return new Response(JSON.stringify({ error: 'not found' }), { status: 404 });
        return handler();
    };
    return { fetchFn, calls };
}

function json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
        status, headers: { 'Content-Type': 'application/json' },
    });
}

describe('ReviewApi', () => {
    it('lists phases and pages pending items', async () => {
        const { fetchFn, calls } = fakeFetch({
            'GET /phases': () => json({ phases: [{ index: 1, pools: { labeled: 4, weak: 0, negative: 0, pending: 6 }, metrics: null }] }),
            'GET /phases/1/pending?offset=2&limit=2': () =>
                json({ total: 6, offset: 2, items: [] }),
        });
        const api = new ReviewApi('', fetchFn);
        const phases = await api.phases();
        expect(phases[0].index).toBe(1);
        const page = await api.pending(1, 2, 2);
        expect(page.total).toBe(6);
        expect(calls.length).toBe(2);
    });

    it('posts verdicts as a JSON array', async () => {
        const { fetchFn, calls } = fakeFetch({
            'POST /phases/1/verdicts': () =>
                json({ results: [{ sample_id: 'a', decision: 'ACCEPT', applied: true }],
                       pools: { labeled: 4, weak: 1, negative: 0, pending: 5 } }),
        });
        const api = new ReviewApi('', fetchFn);
        const resp = await api.postVerdicts(1, [{ sample_id: 'a', decision: 'ACCEPT' }]);
        expect(resp.pools.weak).toBe(1);
        expect(JSON.parse(calls[0].init!.body as string)).toEqual(
            [{ sample_id: 'a', decision: 'ACCEPT' }]);
    });

    it('maps 409 to StalePhaseError with the server message', async () => {
        const { fetchFn } = fakeFetch({
            'GET /phases/1/pending?offset=0&limit=50': () => json({ error: 'stale phase' }, 409),
        });
        const api = new ReviewApi('', fetchFn);
        await expect(api.pending(1)).rejects.toThrowError(StalePhaseError);
        await expect(api.pending(1)).rejects.toThrow('stale phase');
    });

    it('maps 423 to PhaseLockedError and others to ApiError', async () => {
        const { fetchFn } = fakeFetch({
            'POST /phases/1/advance': () => json({ error: 'advance already running' }, 423),
            'GET /jobs/nope': () => json({ error: 'unknown job' }, 404),
        });
        const api = new ReviewApi('', fetchFn);
        await expect(api.advance(1)).rejects.toThrowError(PhaseLockedError);
        const err = await api.job('nope').catch((e) => e);
        expect(err).toBeInstanceOf(ApiError);
        expect(err).not.toBeInstanceOf(StalePhaseError);
        expect(err.status).toBe(404);
    });

    it('pollJob keeps polling until the job leaves the running state', async () => {
        let polls = 0;
        const { fetchFn } = fakeFetch({
            'POST /phases/1/advance': () => json({ job_id: 'j1' }),
            'GET /jobs/j1': () => {
                polls += 1;
                return polls < 3
                    ? json({ status: 'running' })
                    : json({ status: 'done', phase_index: 2 });
            },
        });
        const api = new ReviewApi('', fetchFn);
        const jobId = await api.advance(1);
        const slept: number[] = [];
        const status = await api.pollJob(jobId, 25, async (ms) => { slept.push(ms); });
        expect(status).toEqual({ status: 'done', phase_index: 2 });
        expect(polls).toBe(3);
        expect(slept).toEqual([25, 25]);
    });

    it('pollJob surfaces failed jobs without throwing', async () => {
        const { fetchFn } = fakeFetch({
            'GET /jobs/j2': () => json({ status: 'failed', error: 'training set unchanged' }),
        });
        const api = new ReviewApi('', fetchFn);
        const status = await api.pollJob('j2', 1, async () => {});
        expect(status.status).toBe('failed');
        expect(status.error).toContain('unchanged');
    });
});
