/**
 * Typed client for the grading service REST API.
 *
 * All calls carry the bearer token from /api/login; the fetch function is
 * injectable so tests can stub the network.
 */

export interface CourseInfo {
  course_id: string;
  title: string;
  problem_count: number;
  highest_unlocked_index: number;
  solved: string[];
}

export interface ProblemView {
  problem_id: string;
  kind: "program" | "function";
  prompt_prefix: string;
  function_name: string | null;
  image_url: string;
  max_prompt_words: number | null;
  solved: boolean;
  index: number;
  problem_count: number;
}

export interface FirstFailure {
  expected_display: string;
  actual_display: string;
}

export interface SubmissionResponseBody {
  verdict: "pass" | "fail" | "generation_error" | "execution_error";
  feedback_message: string;
  generated_code: string | null;
  first_failure: FirstFailure | null;
  unlocked_next: boolean;
  attempt_number: number;
  word_count: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = await response.json();
    if (typeof body?.detail === "string") return body.detail;
    return JSON.stringify(body?.detail ?? body);
  } catch {
    return response.statusText;
  }
}

export class ApiClient {
  private token: string | null = null;

  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  get authenticated(): boolean {
    return this.token !== null;
  }

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const headers = new Headers(init.headers);
    if (this.token) headers.set("Authorization", `Bearer ${this.token}`);
    const response = await this.fetchFn(this.baseUrl + path, { ...init, headers });
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return response;
  }

  async login(userId: string, secret: string): Promise<void> {
    const response = await this.request("/api/login", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ user_id: userId, secret }),
    });
    const body = await response.json();
    this.token = body.token;
  }

  async courses(): Promise<CourseInfo[]> {
    const response = await this.request("/api/courses");
    return response.json();
  }

  async problem(courseId: string, index: number): Promise<ProblemView> {
    const response = await this.request(`/api/courses/${courseId}/problems/${index}`);
    return response.json();
  }

  async submit(
    courseId: string,
    index: number,
    studentText: string,
  ): Promise<SubmissionResponseBody> {
    const response = await this.request(
      `/api/courses/${courseId}/problems/${index}/submissions`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ student_text: studentText }),
      },
    );
    return response.json();
  }

  /** Image URLs need the token as a query parameter; <img> cannot send headers. */
  assetUrl(imageUrl: string): string {
    if (!this.token) return this.baseUrl + imageUrl;
    const separator = imageUrl.includes("?") ? "&" : "?";
    return `${this.baseUrl}${imageUrl}${separator}token=${encodeURIComponent(this.token)}`;
  }
}
