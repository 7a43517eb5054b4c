/**
 * Session flow state machine, independent of the DOM.
 *
 * Clips are presented one at a time in server order. A rating cannot be
 * submitted until a score is selected, and once a clip's ack arrives the
 * flow advances with no way back. Failed submissions stay pending locally
 * and are retried until the server acknowledges them, so a rating is never
 * silently lost.
 */

import { ListeningApi } from './api.js';

export type Score = 1 | 2 | 3 | 4 | 5;
export const SCORES: readonly Score[] = [1, 2, 3, 4, 5];

export interface ClipView {
  clipId: string;
  audioUrl: string;
  rated: boolean;
  selectedScore: Score | null;
}

export type FlowPhase = 'loading' | 'rating' | 'submitting' | 'retrying' | 'complete' | 'failed';

export interface FlowState {
  phase: FlowPhase;
  clipIndex: number;
  clipCount: number;
  statusMessage: string | null;
  attempts: number;
}

export interface FlowOptions {
  retryDelayMs?: number;
  maxAttempts?: number;
  onChange?: (state: FlowState) => void;
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class SessionFlow {
  private sessionId = '';
  private clips: ClipView[] = [];
  private index = 0;
  private phase: FlowPhase = 'loading';
  private statusMessage: string | null = null;
  private attempts = 0;
  private readonly retryDelayMs: number;
  private readonly maxAttempts: number;
  private readonly onChange: (state: FlowState) => void;

  constructor(
    private readonly api: ListeningApi,
    private readonly evaluatorId: string,
    options: FlowOptions = {},
  ) {
    this.retryDelayMs = options.retryDelayMs ?? 1500;
    this.maxAttempts = options.maxAttempts ?? 20;
    this.onChange = options.onChange ?? (() => undefined);
  }

  get state(): FlowState {
    return {
      phase: this.phase,
      clipIndex: this.index,
      clipCount: this.clips.length,
      statusMessage: this.statusMessage,
      attempts: this.attempts,
    };
  }

  currentClip(): ClipView | null {
    return this.clips[this.index] ?? null;
  }

  private emit(phase: FlowPhase, statusMessage: string | null = null): void {
    this.phase = phase;
    this.statusMessage = statusMessage;
    this.onChange(this.state);
  }

  async start(): Promise<void> {
    this.emit('loading');
    const session = await this.api.createSession(this.evaluatorId);
    this.sessionId = session.session_id;
    const clips = await this.api.getClips(this.sessionId);
    this.clips = clips.map((c) => ({
      clipId: c.clip_id,
      audioUrl: c.audio_url,
      rated: c.completed,
      selectedScore: null,
    }));
    this.emit(this.clips.length ? 'rating' : 'complete');
  }

  /** Select one of the five scores for the current clip. */
  selectScore(score: number): void {
    if (!SCORES.includes(score as Score)) {
      throw new RangeError(`score must be one of ${SCORES.join(', ')}, got ${score}`);
    }
    const clip = this.currentClip();
    if (!clip || this.phase !== 'rating') {
      return;
    }
    clip.selectedScore = score as Score;
    this.emit('rating');
  }

  canSubmit(): boolean {
    const clip = this.currentClip();
    return this.phase === 'rating' && clip !== null && clip.selectedScore !== null;
  }

  /**
   * Submit the current clip's rating, retrying on failure until the server
   * acks. The selected score is kept locally across attempts.
   */
  async submit(): Promise<void> {
    const clip = this.currentClip();
    if (!this.canSubmit() || !clip || clip.selectedScore === null) {
      return;
    }
    const score = clip.selectedScore;
    this.attempts = 0;
    this.emit('submitting');
    for (;;) {
      this.attempts += 1;
      try {
        await this.api.submitRating(this.sessionId, clip.clipId, score);
        break;
      } catch (err) {
        if (this.attempts >= this.maxAttempts) {
          this.emit('failed', `could not submit rating: ${String(err)}`);
          return;
        }
        this.emit('retrying', `submission failed, retrying (attempt ${this.attempts + 1})`);
        await sleep(this.retryDelayMs);
      }
    }
    clip.rated = true;
    this.index += 1;
    this.attempts = 0;
    this.emit(this.index >= this.clips.length ? 'complete' : 'rating');
  }
}
