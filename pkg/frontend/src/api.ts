// Typed client for the session service HTTP API.

import type { MaskResponse, PromptSetDoc, RleDoc, SessionInfo } from './schema.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) {
    throw new ApiError(resp.status, (body as { error?: string }).error ?? resp.statusText);
  }
  return body as T;
}

export class SegmentClient {
  constructor(
    private base: string = '',
    private fetchFn: typeof fetch = fetch,
  ) {}

  createSession(image: Blob): Promise<SessionInfo> {
    return this.fetchFn(`${this.base}/sessions`, {
      method: 'POST',
      body: image,
      headers: { 'Content-Type': 'application/octet-stream' },
    }).then((r) => asJson<SessionInfo>(r));
  }

  submitPrompts(sessionId: string, doc: PromptSetDoc): Promise<MaskResponse> {
    return this.fetchFn(`${this.base}/sessions/${sessionId}/prompts`, {
      method: 'POST',
      body: JSON.stringify(doc),
      headers: { 'Content-Type': 'application/json' },
    }).then((r) => asJson<MaskResponse>(r));
  }

  getMask(sessionId: string): Promise<MaskResponse> {
    return this.fetchFn(`${this.base}/sessions/${sessionId}/mask`).then((r) =>
      asJson<MaskResponse>(r),
    );
  }

  deleteSession(sessionId: string): Promise<void> {
    return this.fetchFn(`${this.base}/sessions/${sessionId}`, { method: 'DELETE' }).then((r) =>
      asJson<void>(r),
    );
  }

  putGroundTruth(sessionId: string, rle: RleDoc): Promise<void> {
    return this.fetchFn(`${this.base}/sessions/${sessionId}/gt`, {
      method: 'PUT',
      body: JSON.stringify({ mask_rle: rle }),
      headers: { 'Content-Type': 'application/json' },
    }).then((r) => asJson<void>(r));
  }

  health(): Promise<{ status: string; model_fingerprint: string; input_size: number }> {
    return this.fetchFn(`${this.base}/healthz`).then((r) => asJson(r));
  }
}

type Submit = (doc: PromptSetDoc) => Promise<MaskResponse>;

// One request in flight per session; submissions arriving mid-flight are
// coalesced so only the latest document is sent afterwards.
export class SubmitQueue {
  private inFlight = false;
  private pending: PromptSetDoc | null = null;

  constructor(
    private submit: Submit,
    private onResult: (resp: MaskResponse) => void,
    private onError: (err: unknown) => void,
  ) {}

  push(doc: PromptSetDoc): void {
    if (this.inFlight) {
      this.pending = doc;
      return;
    }
    this.run(doc);
  }

  private run(doc: PromptSetDoc): void {
    this.inFlight = true;
    this.submit(doc)
      .then((resp) => this.onResult(resp))
      .catch((err) => this.onError(err))
      .finally(() => {
        this.inFlight = false;
        if (this.pending !== null) {
          const next = this.pending;
          this.pending = null;
          this.run(next);
        }
      });
  }
}
