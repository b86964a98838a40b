// Typed client for the human-evaluation backend.  The evaluator-facing API
// never exposes which system produced which summary; this module has no
// fields for system identities at all.

export interface Progress {
  done: number;
  total: number;
}

export interface PairView {
  done: false;
  pair_id: string;
  chart_image_url: string;
  left: string;
  right: string;
  progress: Progress;
}

export interface CompletedView {
  done: true;
  progress: Progress;
}

export type SessionView = PairView | CompletedView;

export type Side = "left" | "right";

export interface ChoiceReply {
  status: "recorded" | "already-recorded";
  progress: Progress;
}

export class BackendError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { error?: string };
      if (body.error) detail = body.error;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new BackendError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class EvalApi {
  constructor(private baseUrl: string) {}

  resolve(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async openSession(): Promise<string> {
    const body = await asJson<{ session_id: string }>(
      await fetch(this.resolve("/session"), { method: "POST" }),
    );
    return body.session_id;
  }

  async next(sessionId: string): Promise<SessionView> {
    return asJson<SessionView>(
      await fetch(this.resolve(`/session/${sessionId}/next`)),
    );
  }

  async choose(sessionId: string, pairId: string, side: Side): Promise<ChoiceReply> {
    return asJson<ChoiceReply>(
      await fetch(this.resolve(`/session/${sessionId}/choice`), {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ pair_id: pairId, side }),
      }),
    );
  }
}
