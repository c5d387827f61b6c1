// What-if panel state: overrides move pending -> applied only on service
// acknowledgment, and the applied list always mirrors the server's ids.

import type { OverrideRequest } from './types.js';

export type OverrideStatus = 'pending' | 'applied' | 'removing';

export interface TrackedOverride {
  localId: number;
  request: OverrideRequest;
  status: OverrideStatus;
  overrideId?: string; // server id once acknowledged
}

export interface WhatIfState {
  nextLocalId: number;
  overrides: TrackedOverride[];
}

export function emptyWhatIf(): WhatIfState {
  return { nextLocalId: 1, overrides: [] };
}

export function submitOverride(state: WhatIfState, request: OverrideRequest): WhatIfState {
  const entry: TrackedOverride = {
    localId: state.nextLocalId,
    request,
    status: 'pending',
  };
  return { nextLocalId: state.nextLocalId + 1, overrides: [...state.overrides, entry] };
}

export function acknowledgeOverride(
  state: WhatIfState,
  localId: number,
  overrideId: string,
): WhatIfState {
  return {
    ...state,
    overrides: state.overrides.map((o) =>
      o.localId === localId ? { ...o, status: 'applied', overrideId } : o,
    ),
  };
}

export function rejectOverride(state: WhatIfState, localId: number): WhatIfState {
  return {
    ...state,
    overrides: state.overrides.filter((o) => o.localId !== localId),
  };
}

export function beginRemove(state: WhatIfState, overrideId: string): WhatIfState {
  return {
    ...state,
    overrides: state.overrides.map((o) =>
      o.overrideId === overrideId ? { ...o, status: 'removing' } : o,
    ),
  };
}

export function confirmRemoved(state: WhatIfState, overrideId: string): WhatIfState {
  return {
    ...state,
    overrides: state.overrides.filter((o) => o.overrideId !== overrideId),
  };
}

/** Applied override ids, for reconciling against the service's list. */
export function appliedIds(state: WhatIfState): string[] {
  return state.overrides
    .filter((o) => o.status === 'applied' && o.overrideId)
    .map((o) => o.overrideId!);
}

export function describeOverride(request: OverrideRequest): string {
  switch (request.kind) {
    case 'vitals':
    case 'static': {
      const fields = Object.entries(request.fields ?? {})
        .map(([k, v]) => `${k}=${v}`)
        .join(', ');
      return `${request.kind}: ${fields}`;
    }
    case 'inject_event':
      return `inject ${request.activity} @ ${request.start_s}-${request.end_s}s`;
    case 'suppress_event':
      return `suppress ${request.activity}${request.start_s != null ? ` @ ${request.start_s}s` : ''}`;
  }
}
