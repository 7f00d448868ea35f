/**
 * Latest-wins request coalescing.
 *
 * At most one request is ever in flight. Submissions that arrive while one
 * is running overwrite a single pending slot instead of queuing, so a burst
 * of interactions costs at most two renders: the one already running and
 * the newest intent. The final delivered result always corresponds to the
 * final submission.
 */

export class LatestWins<T, R> {
  private inflight = false;
  private pending: T | null = null;

  constructor(
    private readonly run: (req: T) => Promise<R>,
    private readonly onResult: (req: T, result: R) => void,
    private readonly onError: (req: T, err: unknown) => void = () => {},
  ) {}

  get busy(): boolean {
    return this.inflight;
  }

  submit(req: T): void {
    if (this.inflight) {
      this.pending = req;
      return;
    }
    this.launch(req);
  }

  private launch(req: T): void {
    this.inflight = true;
    this.run(req).then(
      (res) => this.settle(() => this.onResult(req, res)),
      (err) => this.settle(() => this.onError(req, err)),
    );
  }

  private settle(deliver: () => void): void {
    this.inflight = false;
    const next = this.pending;
    this.pending = null;
    deliver();
    if (next !== null && !this.inflight) {
      // deliver() may itself have submitted something newer; that one
      // already launched and wins over the stale pending slot
      this.launch(next);
    }
  }
}
