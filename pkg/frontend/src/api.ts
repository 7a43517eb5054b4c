/**
 * Typed client for the listening test HTTP API.
 */

export interface SessionInfo {
  session_id: string;
  clip_count: number;
}

export interface ClipInfo {
  clip_id: string;
  audio_url: string;
  completed: boolean;
}

export interface RatingAck {
  acknowledged: boolean;
  session_id: string;
  clip_id: string;
  score: number;
  session_complete: boolean;
}

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ListeningApi {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`);
    }
    if (!response.ok) {
      throw new ApiError(`request failed: ${path}`, response.status);
    }
    return (await response.json()) as T;
  }

  createSession(evaluatorId: string): Promise<SessionInfo> {
    return this.request<SessionInfo>('/sessions', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ evaluator_id: evaluatorId }),
    });
  }

  getClips(sessionId: string): Promise<ClipInfo[]> {
    return this.request<ClipInfo[]>(`/sessions/${encodeURIComponent(sessionId)}/clips`);
  }

  submitRating(sessionId: string, clipId: string, score: number): Promise<RatingAck> {
    return this.request<RatingAck>('/ratings', {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ session_id: sessionId, clip_id: clipId, score }),
    });
  }
}
