/** Fixed-interval playback clock. The frame logic lives in state.tick. */

export class Player {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    readonly intervalMs: number,
    private readonly onTick: () => void,
  ) {}

  get running(): boolean {
    return this.timer !== null;
  }

  start(): void {
    if (this.timer !== null) return;
    this.timer = setInterval(this.onTick, this.intervalMs);
  }

  stop(): void {
    if (this.timer === null) return;
    clearInterval(this.timer);
    this.timer = null;
  }
}
