/**
 * Thin HTTP client for the render service.
 *
 * fetch and the clock are injected so tests can drive it with a mock
 * service and fake latency. Displayed latency splits into the server's
 * X-Render-Millis and the remaining network time.
 */

import { Meta, RenderResult } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (u, i) => fetch(u, i),
    private readonly now: () => number = () => performance.now(),
  ) {}

  async meta(): Promise<Meta> {
    const resp = await this.fetchFn(this.baseUrl + "/meta");
    if (!resp.ok) {
      throw new Error(`meta failed: ${resp.status} ${await resp.text()}`);
    }
    return (await resp.json()) as Meta;
  }

  /** GET /render?<query>; query comes from state.queryOf. */
  async render(query: string): Promise<RenderResult> {
    const t0 = this.now();
    const resp = await this.fetchFn(this.baseUrl + "/render?" + query);
    if (!resp.ok) {
      throw new Error(`render failed: ${resp.status} ${await resp.text()}`);
    }
    const blob = await resp.blob();
    const total = this.now() - t0;
    const renderMillis = parseFloat(resp.headers.get("X-Render-Millis") ?? "0") || 0;
    return {
      blob,
      renderMillis,
      networkMillis: Math.max(0, total - renderMillis),
    };
  }
}
