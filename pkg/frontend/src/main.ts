import { ListeningApi } from './api.js';
import { mount } from './ui.js';

function anonymousId(): string {
  const stored = localStorage.getItem('evaluator_id');
  if (stored) {
    return stored;
  }
  const fresh = 'anon-' + Math.random().toString(36).slice(2, 10);
  localStorage.setItem('evaluator_id', fresh);
  return fresh;
}

const root = document.getElementById('app');
if (root) {
  const flow = mount(root, new ListeningApi(''), anonymousId());
  void flow.start();
}
