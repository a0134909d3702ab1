// Order-preserving progress log for a job's event stream.

import type { ProgressEvent } from './types.js';

export interface ProgressRow {
  index: number;
  label: string;
}

export class ProgressLog {
  private rows: ProgressRow[] = [];
  private nextIndex = 0;
  terminal: 'done' | 'failed' | null = null;

  ingest(event: ProgressEvent): ProgressRow {
    const row: ProgressRow = { index: this.nextIndex++, label: formatEvent(event) };
    this.rows.push(row);
    if (event.type === 'state' && event.state === 'done') this.terminal = 'done';
    if (event.type === 'failed' || (event.type === 'state' && event.state === 'failed')) {
      this.terminal = 'failed';
    }
    return row;
  }

  rendered(): string[] {
    return this.rows.map((r) => r.label);
  }

  /** True when rows appear exactly in ingest order. */
  isOrderPreserving(): boolean {
    return this.rows.every((row, i) => row.index === i);
  }
}

export function formatEvent(event: ProgressEvent): string {
  switch (event.type) {
    case 'progress':
      return `${event.stage} step ${event.step} loss ${event.loss?.toFixed(6)}`;
    case 'state':
      return `state: ${event.state}`;
    case 'failed':
      return `failed at ${event.stage ?? '?'}: ${event.error ?? 'unknown error'}`;
  }
}

/** Split an SSE chunk stream into data payloads; tolerates partial chunks. */
export class SseDecoder {
  private buffer = '';

  push(chunk: string): ProgressEvent[] {
    this.buffer += chunk;
    const events: ProgressEvent[] = [];
    let sep = this.buffer.indexOf('\n\n');
    while (sep >= 0) {
      const block = this.buffer.slice(0, sep);
      this.buffer = this.buffer.slice(sep + 2);
      for (const line of block.split('\n')) {
        if (line.startsWith('data: ')) {
          events.push(JSON.parse(line.slice('data: '.length)) as ProgressEvent);
        }
      }
      sep = this.buffer.indexOf('\n\n');
    }
    return events;
  }
}
