// Thin client for the engine service HTTP+JSON contract.

import { SseDecoder } from './progress.js';
import type { EditRequestJson, JobStatus, ProgressEvent } from './types.js';

export class ApiClient {
  constructor(private readonly baseUrl: string = '') {}

  async createSession(image: Blob, role: 'source' | 'reference' = 'source'): Promise<string> {
    const form = new FormData();
    form.append('image', image, 'upload.png');
    const resp = await fetch(`${this.baseUrl}/sessions?role=${role}`, {
      method: 'POST',
      body: form,
    });
    if (!resp.ok) throw new Error(`session upload failed: ${await errorDetail(resp)}`);
    const payload = (await resp.json()) as { id: string };
    return payload.id;
  }

  async sessionStatus(id: string): Promise<{ precompute: string; history: unknown[] }> {
    const resp = await fetch(`${this.baseUrl}/sessions/${id}`);
    if (!resp.ok) throw new Error(`unknown session: ${await errorDetail(resp)}`);
    return (await resp.json()) as { precompute: string; history: unknown[] };
  }

  async waitForPrecompute(id: string, pollMs = 500): Promise<void> {
    for (;;) {
      const status = await this.sessionStatus(id);
      if (status.precompute === 'done') return;
      if (status.precompute === 'failed') throw new Error('session precompute failed');
      await sleep(pollMs);
    }
  }

  async submitEdit(sessionId: string, request: EditRequestJson): Promise<string> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/edits`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(request),
    });
    if (resp.status === 503) throw new Error('engine busy, retry shortly');
    if (!resp.ok) throw new Error(`edit rejected: ${await errorDetail(resp)}`);
    const payload = (await resp.json()) as { job: string };
    return payload.job;
  }

  async jobStatus(jobId: string): Promise<JobStatus> {
    const resp = await fetch(`${this.baseUrl}/jobs/${jobId}`);
    if (!resp.ok) throw new Error(`unknown job: ${await errorDetail(resp)}`);
    return (await resp.json()) as JobStatus;
  }

  resultUrl(jobId: string): string {
    return `${this.baseUrl}/jobs/${jobId}/result`;
  }

  /** Stream job events in order; resolves when the job reaches a terminal state. */
  async streamEvents(jobId: string, onEvent: (e: ProgressEvent) => void): Promise<void> {
    const resp = await fetch(`${this.baseUrl}/jobs/${jobId}/events`);
    if (!resp.ok || resp.body === null) {
      throw new Error(`event stream unavailable: ${await errorDetail(resp)}`);
    }
    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const sse = new SseDecoder();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      for (const event of sse.push(decoder.decode(value, { stream: true }))) {
        onEvent(event);
      }
    }
  }
}

async function errorDetail(resp: Response): Promise<string> {
  try {
    const payload = (await resp.json()) as { detail?: string };
    return payload.detail ?? `${resp.status}`;
  } catch {
    return `${resp.status}`;
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
