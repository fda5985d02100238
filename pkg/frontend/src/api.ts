/** REST client for the annotation API served by the grounding CLI. */

export interface SampleSummary {
  id: string;
  instruction: string;
  category: string;
  split: string;
  n_selected: number;
  annotated: boolean;
}

export interface SampleDoc {
  id: string;
  instruction: string;
  category: string;
  width: number;
  height: number;
  L: number;
  gt_superpixels: number[];
  /** base64 PNGs, exactly as stored by the harness */
  image_png: string;
  labels_png: string;
}

export interface ApiClient {
  listSamples(): Promise<SampleSummary[]>;
  getSample(id: string): Promise<SampleDoc>;
  putLabels(id: string, ids: number[]): Promise<void>;
}

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export class HttpApiClient implements ApiClient {
  constructor(private readonly base: string = "") {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(`${path}: ${detail}`, resp.status);
    }
    return resp.json();
  }

  listSamples(): Promise<SampleSummary[]> {
    return this.request("/api/samples") as Promise<SampleSummary[]>;
  }

  getSample(id: string): Promise<SampleDoc> {
    return this.request(`/api/sample/${encodeURIComponent(id)}`) as Promise<SampleDoc>;
  }

  async putLabels(id: string, ids: number[]): Promise<void> {
    await this.request(`/api/sample/${encodeURIComponent(id)}/labels`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ gt_superpixels: ids }),
    });
  }
}
