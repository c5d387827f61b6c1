// Minimal server-sent-events reader over fetch. The line-level parser is a
// standalone pure function so it can be unit tested without a network.

export interface SseEvent {
  event: string;
  data: string;
}

export interface SseParserState {
  buffer: string;
  event: string;
  data: string;
}

export function newParserState(): SseParserState {
  return { buffer: '', event: 'message', data: '' };
}

/** Feed a chunk; returns complete events. Comments (':') are ignored and a
 * trailing partial line stays buffered for the next chunk. */
export function feedChunk(state: SseParserState, chunk: string): SseEvent[] {
  state.buffer += chunk;
  const lines = state.buffer.split('\n');
  state.buffer = lines.pop() ?? '';
  const events: SseEvent[] = [];
  for (let line of lines) {
    if (line.endsWith('\r')) line = line.slice(0, -1);
    if (line.startsWith(':')) continue;
    if (line.startsWith('event:')) {
      state.event = line.slice(6).trim();
    } else if (line.startsWith('data:')) {
      state.data += line.slice(5).trim();
    } else if (line === '') {
      if (state.data !== '') events.push({ event: state.event, data: state.data });
      state.event = 'message';
      state.data = '';
    }
  }
  return events;
}

/** Consume an SSE endpoint until the stream closes or the signal aborts. */
export async function readSse(
  url: string,
  onEvent: (event: SseEvent) => void,
  signal?: AbortSignal,
): Promise<void> {
  const response = await fetch(url, { headers: { Accept: 'text/event-stream' }, signal });
  if (!response.ok || !response.body) {
    throw new Error(`stream failed: ${response.status}`);
  }
  const reader = response.body.getReader();
  const decoder = new TextDecoder();
  const state = newParserState();
  for (;;) {
    const { done, value } = await reader.read();
    if (done) break;
    for (const event of feedChunk(state, decoder.decode(value, { stream: true }))) {
      onEvent(event);
      if (event.event === 'end') return;
    }
  }
}
