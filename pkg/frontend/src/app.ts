/**
 * Controller wiring the API client, problem state, and views into the
 * login -> course -> problem loop.
 */

import { ApiClient, ApiError, type CourseInfo } from "./api.js";
import {
  applyResponse,
  applySubmitFailure,
  beginSubmission,
  initialState,
  overWordLimit,
  promptWordCount,
  submitEnabled,
  withDraft,
  type ProblemViewState,
} from "./state.js";
import {
  renderLoadError,
  renderLocked,
  renderProblem,
  type ProblemHandlers,
} from "./views.js";

export class App {
  private state: ProblemViewState | null = null;
  private courseId: string | null = null;
  private index = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ApiClient,
  ) {}

  start(): void {
    this.renderLogin();
  }

  private renderLogin(error?: string): void {
    this.root.replaceChildren();
    const form = document.createElement("form");
    form.className = "login-form";
    form.innerHTML = `
      <h1>promptgym</h1>
      <label>User <input name="user_id" autocomplete="username"></label>
      <label>Secret <input name="secret" type="password" autocomplete="current-password"></label>
      <button type="submit">Log in</button>
    `;
    if (error) {
      const notice = document.createElement("p");
      notice.className = "login-error";
      notice.textContent = error;
      form.append(notice);
    }
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      const data = new FormData(form);
      try {
        await this.api.login(String(data.get("user_id")), String(data.get("secret")));
        await this.showCourses();
      } catch (err) {
        this.renderLogin(err instanceof ApiError ? "Invalid credentials." : "Login failed.");
      }
    });
    this.root.append(form);
  }

  private async showCourses(): Promise<void> {
    const courses = await this.api.courses();
    this.root.replaceChildren();
    const list = document.createElement("section");
    list.className = "course-list";
    const title = document.createElement("h1");
    title.textContent = "Courses";
    list.append(title);
    for (const course of courses) {
      list.append(this.courseCard(course));
    }
    this.root.append(list);
  }

  private courseCard(course: CourseInfo): HTMLElement {
    const card = document.createElement("button");
    card.className = "course-card";
    card.textContent =
      `${course.title} (${course.solved.length}/${course.problem_count} solved)`;
    card.addEventListener("click", () => {
      const next = Math.min(course.highest_unlocked_index, course.problem_count - 1);
      void this.openProblem(course.course_id, Math.max(next, 0));
    });
    return card;
  }

  private handlers(): ProblemHandlers {
    return {
      onDraftChange: (text) => {
        if (!this.state) return;
        this.state = withDraft(this.state, text);
        this.updateControls();
      },
      onSubmit: () => void this.submitDraft(),
      onNext: () => void this.openProblem(this.courseId!, this.index + 1),
      onBack: () => void this.showCourses(),
      onRetry: () => void this.openProblem(this.courseId!, this.index),
    };
  }

  /** Cheap refresh for keystrokes: only the controls that depend on the
   * draft change, so the textarea keeps focus. */
  private updateControls(): void {
    if (!this.state) return;
    const submit = this.root.querySelector<HTMLButtonElement>(".submit-btn");
    if (submit) submit.disabled = !submitEnabled(this.state);
    const counter = this.root.querySelector(".word-counter");
    if (counter && this.state.problem.max_prompt_words !== null) {
      counter.textContent =
        `${promptWordCount(this.state)} / ${this.state.problem.max_prompt_words} words`;
      counter.classList.toggle("over-limit", overWordLimit(this.state));
    }
  }

  async openProblem(courseId: string, index: number): Promise<void> {
    this.courseId = courseId;
    this.index = index;
    try {
      const problem = await this.api.problem(courseId, index);
      this.state = initialState(problem);
      this.renderCurrent();
    } catch (err) {
      if (err instanceof ApiError && err.status === 403) {
        renderLocked(this.root, this.handlers());
      } else {
        renderLoadError(this.root, this.handlers());
      }
    }
  }

  private async submitDraft(): Promise<void> {
    if (!this.state || !this.courseId || !submitEnabled(this.state)) return;
    this.state = beginSubmission(this.state);
    this.renderCurrent();
    try {
      const body = await this.api.submit(this.courseId, this.index, this.state.draftText);
      this.state = applyResponse(this.state, body);
    } catch (err) {
      this.state = applySubmitFailure(this.state);
      if (err instanceof ApiError) {
        window.alert(err.message);
      }
    }
    this.renderCurrent();
  }

  private renderCurrent(): void {
    if (!this.state) return;
    renderProblem(this.root, this.state, this.handlers(), (url) => this.api.assetUrl(url));
  }
}
