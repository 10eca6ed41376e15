import { ApiClient } from "./api.js";
import { LabelSession, resumeSession, startSession } from "./session.js";
import {
  bindKeyboard,
  renderCandidates,
  renderErrorBanner,
  renderResult,
  renderSample,
} from "./ui.js";

const DEFAULT_SERVER = "http://127.0.0.1:8230";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function attach(session: LabelSession): Promise<void> {
  el("session-id").textContent = session.id;
  const samplePane = el("sample-pane");
  const candidatesPane = el("candidates-pane");
  const bannerPane = el("banner-pane");

  async function showCandidates(): Promise<void> {
    try {
      const view = await session.api.candidates(session.id);
      candidatesPane.replaceChildren(renderCandidates(document, view));
    } catch {
      // candidates are cosmetic; keep the last good table
    }
  }

  async function loop(): Promise<void> {
    for (;;) {
      let view;
      try {
        view = await session.waitForSample({ timeoutMs: 600_000 });
        bannerPane.replaceChildren();
      } catch (err) {
        bannerPane.replaceChildren(
          renderErrorBanner(document, String(err)),
        );
        continue;
      }
      if (view.state === "done" || view.state === "failed") {
        const result = await session.api.result(session.id);
        samplePane.replaceChildren(renderResult(document, result));
        await showCandidates();
        return;
      }
      samplePane.replaceChildren(renderSample(document, view));
      await showCandidates();
      await new Promise<void>((resolve) => {
        const off = () => resolve();
        session.onEvent((ev) => {
          if (ev.kind === "submitted") off();
        });
      });
    }
  }

  bindKeyboard(document, session);
  el<HTMLButtonElement>("btn-yes").onclick = () => void session.submit(true);
  el<HTMLButtonElement>("btn-no").onclick = () => void session.submit(false);
  el<HTMLButtonElement>("btn-skip").onclick = () => void session.skip();
  session.onEvent((ev) => {
    if (ev.kind === "network-error") {
      bannerPane.replaceChildren(renderErrorBanner(document, ev.message));
    }
  });
  await loop();
}

export async function boot(): Promise<void> {
  const api = new ApiClient(
    (el<HTMLInputElement>("server-url").value || DEFAULT_SERVER).replace(
      /\/$/,
      "",
    ),
  );
  el<HTMLButtonElement>("btn-start").onclick = async () => {
    const text = el<HTMLInputElement>("query-text").value;
    const session = await startSession(api, text);
    await attach(session);
  };
  el<HTMLButtonElement>("btn-resume").onclick = async () => {
    const id = el<HTMLInputElement>("resume-id").value.trim();
    if (id) await attach(resumeSession(api, id));
  };
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void boot();
}
