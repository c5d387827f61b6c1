// Thin typed client for the decision-support service.

import type {
  CaseInfo,
  CatalogInfo,
  EvalReport,
  OverrideRequest,
  PredictionFrame,
  TimelineExport,
} from './types.js';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ServiceClient {
  constructor(private baseUrl: string = '') {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await response.text();
    const doc = text ? JSON.parse(text) : null;
    if (!response.ok) {
      throw new ApiError(response.status, doc?.detail ?? response.statusText);
    }
    return doc as T;
  }

  catalog(): Promise<CatalogInfo> {
    return this.call('GET', '/catalog');
  }

  cases(): Promise<CaseInfo[]> {
    return this.call('GET', '/cases');
  }

  evalReport(): Promise<EvalReport> {
    return this.call('GET', '/reports/eval');
  }

  timelineExport(caseId: string, cutoff: number): Promise<TimelineExport> {
    return this.call('GET', `/reports/timeline/${caseId}?cutoff=${cutoff}`);
  }

  async createSession(mode: 'replay' | 'live', caseId?: string): Promise<string> {
    const doc = await this.call<{ session_id: string }>('POST', '/sessions', {
      mode,
      case_id: caseId,
    });
    return doc.session_id;
  }

  closeSession(sessionId: string): Promise<unknown> {
    return this.call('DELETE', `/sessions/${sessionId}`);
  }

  tick(sessionId: string): Promise<PredictionFrame> {
    return this.call('POST', `/sessions/${sessionId}/tick`);
  }

  frames(sessionId: string): Promise<PredictionFrame[]> {
    return this.call('GET', `/sessions/${sessionId}/frames`);
  }

  streamUrl(sessionId: string): string {
    return `${this.baseUrl}/sessions/${sessionId}/stream`;
  }

  async applyOverride(sessionId: string, request: OverrideRequest): Promise<string> {
    const doc = await this.call<{ override_id: string }>(
      'POST',
      `/sessions/${sessionId}/overrides`,
      request,
    );
    return doc.override_id;
  }

  removeOverride(sessionId: string, overrideId: string): Promise<unknown> {
    return this.call('DELETE', `/sessions/${sessionId}/overrides/${overrideId}`);
  }

  recordEvent(
    sessionId: string,
    activity: string,
    startS: number,
    endS: number,
  ): Promise<unknown> {
    return this.call('POST', `/sessions/${sessionId}/events`, {
      activity,
      start_s: startS,
      end_s: endS,
    });
  }
}
