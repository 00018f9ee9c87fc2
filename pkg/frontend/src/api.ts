// Typed client for the generation service. fetch and the poll interval
// are injectable so tests can drive the client without a network.

import type {
  CompileOutcome, ErrorBody, FieldError, GenerateRequest, GenerateResult,
  HealthInfo, JobRecord, TaskListing, TaskSpec,
} from "./types.js";

export class ServiceError extends Error {
  status: number;
  fields: FieldError[];

  constructor(status: number, fields: FieldError[]) {
    const detail = fields.map((f) => `${f.field}: ${f.message}`).join("; ");
    super(detail || `service error (HTTP ${status})`);
    this.name = "ServiceError";
    this.status = status;
    this.fields = fields;
  }
}

export interface ClientOptions {
  baseUrl: string;
  fetchFn?: typeof fetch;
  pollMs?: number;
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class ApiClient {
  readonly baseUrl: string;
  readonly pollMs: number;
  private fetchFn: typeof fetch;

  constructor(opts: ClientOptions) {
    this.baseUrl = opts.baseUrl.replace(/\/$/, "");
    this.fetchFn = opts.fetchFn ?? fetch;
    this.pollMs = opts.pollMs ?? 500;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    if (!res.ok) {
      let fields: FieldError[] = [];
      try {
        const body = (await res.json()) as ErrorBody;
        if (Array.isArray(body.errors)) fields = body.errors;
      } catch {
        // non-JSON error body; status alone will have to do
      }
      throw new ServiceError(res.status, fields);
    }
    return (await res.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<HealthInfo> {
    return this.request<HealthInfo>("/health");
  }

  taskList(): Promise<TaskListing> {
    return this.request<TaskListing>("/tasks");
  }

  compile(task: TaskSpec, nSlots?: number): Promise<CompileOutcome> {
    const body: Record<string, unknown> = { task };
    if (nSlots !== undefined) body.n_slots = nSlots;
    return this.post<CompileOutcome>("/priors/compile", body);
  }

  submit(req: GenerateRequest): Promise<{ job_id: string; status: string }> {
    return this.post<{ job_id: string; status: string }>("/generate", req);
  }

  job(jobId: string): Promise<JobRecord> {
    return this.request<JobRecord>(`/jobs/${jobId}`);
  }

  result(jobId: string): Promise<GenerateResult> {
    return this.request<GenerateResult>(`/jobs/${jobId}/result.json`);
  }

  midiUrl(jobId: string): string {
    return `${this.baseUrl}/jobs/${jobId}/result.mid`;
  }

  /** Submit, poll until terminal, resolve with the decoded result. */
  async generateAndWait(
    req: GenerateRequest,
    onStatus?: (record: JobRecord | { job_id: string; status: string }) => void,
  ): Promise<GenerateResult> {
    const submitted = await this.submit(req);
    onStatus?.(submitted);
    for (;;) {
      const record = await this.job(submitted.job_id);
      onStatus?.(record);
      if (record.status === "done") return this.result(record.job_id);
      if (record.status === "failed") {
        throw new ServiceError(500, [
          { field: "job", message: record.error ?? "generation failed" },
        ]);
      }
      await sleep(this.pollMs);
    }
  }
}
