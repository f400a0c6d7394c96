/** Trailing-edge debounce with cancel/flush, for slider-driven queries. */

export interface Debounced<A extends unknown[]> {
  call(...args: A): void;
  cancel(): void;
  /** Run a pending call immediately (no-op when idle). */
  flush(): void;
  readonly pending: boolean;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let lastArgs: A | null = null;

  const fire = () => {
    timer = null;
    const args = lastArgs!;
    lastArgs = null;
    fn(...args);
  };

  return {
    call(...args: A) {
      lastArgs = args;
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(fire, waitMs);
    },
    cancel() {
      if (timer !== null) clearTimeout(timer);
      timer = null;
      lastArgs = null;
    },
    flush() {
      if (timer !== null) {
        clearTimeout(timer);
        fire();
      }
    },
    get pending() {
      return timer !== null;
    },
  };
}
