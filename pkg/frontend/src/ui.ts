/**
 * DOM rendering for the listening test: one clip on screen at a time,
 * score buttons 1..5, submit disabled until a score is chosen, a retry
 * banner on network trouble, and a completion screen. Evaluators only ever
 * see the clip's position in their session, never names or configuration.
 */

import { ListeningApi } from './api.js';
import { FlowOptions, SCORES, SessionFlow } from './session.js';

/** Create a flow bound to `root`, re-rendering on every state change. */
export function mount(
  root: HTMLElement,
  api: ListeningApi,
  evaluatorId: string,
  options: Omit<FlowOptions, 'onChange'> = {},
): SessionFlow {
  const flow = new SessionFlow(api, evaluatorId, {
    ...options,
    onChange: () => render(root, flow),
  });
  return flow;
}

export function render(root: HTMLElement, flow: SessionFlow): void {
  const state = flow.state;
  root.textContent = '';

  if (state.phase === 'loading') {
    root.appendChild(el('p', 'status', 'Preparing your listening session…'));
    return;
  }

  if (state.phase === 'complete') {
    const done = el('div', 'complete');
    done.appendChild(el('h2', '', 'All done'));
    done.appendChild(
      el('p', '', `Thank you! You rated ${state.clipCount} clips. You can close this page.`),
    );
    root.appendChild(done);
    return;
  }

  if (state.phase === 'failed') {
    root.appendChild(el('p', 'banner error', state.statusMessage ?? 'Submission failed.'));
    return;
  }

  const clip = flow.currentClip();
  if (!clip) {
    return;
  }

  root.appendChild(el('p', 'progress', `Clip ${state.clipIndex + 1} of ${state.clipCount}`));

  const audio = document.createElement('audio');
  audio.controls = true;
  audio.src = clip.audioUrl;
  audio.setAttribute('data-role', 'player');
  root.appendChild(audio);

  root.appendChild(
    el('p', 'prompt', 'Rate the clarity and overall quality of this clip (1 worst, 5 best).'),
  );

  const busy = state.phase === 'submitting' || state.phase === 'retrying';

  const scoreRow = el('div', 'scores');
  for (const score of SCORES) {
    const button = document.createElement('button');
    button.type = 'button';
    button.className = 'score' + (clip.selectedScore === score ? ' selected' : '');
    button.textContent = String(score);
    button.setAttribute('data-score', String(score));
    button.disabled = busy;
    button.addEventListener('click', () => flow.selectScore(score));
    scoreRow.appendChild(button);
  }
  root.appendChild(scoreRow);

  const submit = document.createElement('button');
  submit.type = 'button';
  submit.className = 'submit';
  submit.textContent = 'Submit rating';
  submit.disabled = busy || !flow.canSubmit();
  submit.setAttribute('data-role', 'submit');
  submit.addEventListener('click', () => {
    if (flow.canSubmit()) {
      void flow.submit();
    }
  });
  root.appendChild(submit);

  if (busy) {
    root.appendChild(el('p', 'banner', state.statusMessage ?? 'Submitting your rating…'));
  }
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}
