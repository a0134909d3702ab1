import { describe, expect, it } from 'vitest';

import { ProgressLog, SseDecoder } from '../src/progress.js';
import type { ProgressEvent } from '../src/types.js';

describe('progress log', () => {
  it('renders events in stream order', () => {
    const log = new ProgressLog();
    const events: ProgressEvent[] = [
      { type: 'state', state: 'running' },
      { type: 'progress', stage: 'invert', step: 0, loss: 0.5 },
      { type: 'progress', stage: 'invert', step: 1, loss: 0.4 },
      { type: 'progress', stage: 'hairstyle', step: 0, loss: 0.9 },
      { type: 'state', state: 'done', result: 'abc' },
    ];
    for (const e of events) log.ingest(e);
    expect(log.isOrderPreserving()).toBe(true);
    const rows = log.rendered();
    expect(rows).toHaveLength(5);
    expect(rows[0]).toBe('state: running');
    expect(rows[1]).toContain('invert step 0');
    expect(rows[3]).toContain('hairstyle step 0');
    expect(log.terminal).toBe('done');
  });

  it('flags failures as terminal', () => {
    const log = new ProgressLog();
    log.ingest({ type: 'state', state: 'running' });
    log.ingest({ type: 'failed', stage: 'sketch', error: 'no inverter' });
    expect(log.terminal).toBe('failed');
    expect(log.rendered()[1]).toContain('failed at sketch');
  });
});

describe('sse decoder', () => {
  it('reassembles events across chunk boundaries', () => {
    const decoder = new SseDecoder();
    const full =
      'data: {"type":"progress","stage":"invert","step":0,"loss":0.5}\n\n' +
      'data: {"type":"state","state":"done"}\n\n';
    const events: ProgressEvent[] = [];
    for (const chunk of [full.slice(0, 17), full.slice(17, 40), full.slice(40)]) {
      events.push(...decoder.push(chunk));
    }
    expect(events).toHaveLength(2);
    expect(events[0]).toMatchObject({ type: 'progress', stage: 'invert', step: 0 });
    expect(events[1]).toMatchObject({ type: 'state', state: 'done' });
  });

  it('keeps per-stage steps monotone when replaying a recorded stream', () => {
    const decoder = new SseDecoder();
    let payload = 'data: {"type":"state","state":"running"}\n\n';
    for (let s = 0; s < 20; s++) {
      payload += `data: {"type":"progress","stage":"invert","step":${s},"loss":${1 / (s + 1)}}\n\n`;
    }
    payload += 'data: {"type":"state","state":"done"}\n\n';
    const log = new ProgressLog();
    for (const e of decoder.push(payload)) log.ingest(e);
    expect(log.isOrderPreserving()).toBe(true);
    const steps = log
      .rendered()
      .filter((r) => r.startsWith('invert'))
      .map((r) => parseInt(r.split(' ')[2]!, 10));
    expect(steps).toEqual([...steps].sort((a, b) => a - b));
  });
});
