/** Thin client for the layout service. */

import { ReviewSession } from "./state.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export type ApiResult<T> =
  | { ok: true; value: T }
  | { ok: false; status?: number; error: string };

export interface SubmitAck {
  page_id: string;
  correction_id: number;
  staged: number;
  status: string;
}

/** GET the layout and open a review session over the exact bytes. */
export async function loadDocument(
  baseUrl: string,
  pageId: string,
  fetchImpl: FetchLike = fetch,
): Promise<ApiResult<ReviewSession>> {
  let response: Response;
  try {
    response = await fetchImpl(`${baseUrl}/documents/${pageId}/layout`);
  } catch (err) {
    return { ok: false, error: `service unreachable: ${String(err)}` };
  }
  if (!response.ok) {
    return { ok: false, status: response.status, error: `document ${pageId} not found` };
  }
  return { ok: true, value: ReviewSession.fromJson(await response.text()) };
}

/** POST the pending edits. On success the pending list (and history) clears;
 * on any failure the pending edits are retained for retry. */
export async function submitCorrections(
  session: ReviewSession,
  baseUrl: string,
  operator: string,
  options: { timestamp?: string; fetchImpl?: FetchLike } = {},
): Promise<ApiResult<SubmitAck>> {
  if (!session.canSubmit) {
    return { ok: false, error: "nothing to submit" };
  }
  const body = session.serializeCorrection(operator, options.timestamp);
  const fetchImpl = options.fetchImpl ?? fetch;
  let response: Response;
  try {
    response = await fetchImpl(`${baseUrl}/documents/${session.pageId}/corrections`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body,
    });
  } catch (err) {
    return { ok: false, error: `service unreachable: ${String(err)}` };
  }
  if (!response.ok) {
    return { ok: false, status: response.status, error: await response.text() };
  }
  const ack = (await response.json()) as SubmitAck;
  session.clearPending();
  return { ok: true, value: ack };
}
