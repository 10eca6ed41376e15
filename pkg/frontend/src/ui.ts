import type { LabelSession } from "./session.js";
import type {
  CandidatesView,
  ResultView,
  SampleView,
  UnitMetadata,
} from "./types.js";

/** Render the sample pane: the server-overlaid patch when pixels exist,
 * otherwise an SVG diagram of the frame with the subject box in red and
 * the target box in blue. */
export function renderSample(doc: Document, view: SampleView): HTMLElement {
  const root = doc.createElement("div");
  root.className = "sample";
  if (view.state !== "awaiting_label" || !view.metadata) {
    root.textContent = `state: ${view.state}`;
    return root;
  }
  const meta = view.metadata;
  const header = doc.createElement("div");
  header.className = "sample-header";
  header.textContent =
    `${view.concept ?? ""} — video ${meta.vid}, frame ${meta.fid} ` +
    `(${view.phase} phase, label ${(view.budget_used ?? 0) + 1} of ` +
    `${view.budget})`;
  root.appendChild(header);
  if (view.image) {
    const img = doc.createElement("img");
    img.className = "sample-image";
    img.src = `data:image/png;base64,${view.image}`;
    img.alt = "sample patch (red: subject, blue: target)";
    root.appendChild(img);
  } else {
    root.appendChild(renderDiagram(doc, meta));
  }
  const question = doc.createElement("p");
  question.className = "sample-question";
  question.textContent = `${view.description ?? ""}? (y / n / s)`;
  root.appendChild(question);
  return root;
}

function renderDiagram(doc: Document, meta: UnitMetadata): Element {
  const svg = doc.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${meta.width} ${meta.height}`);
  svg.setAttribute("class", "sample-diagram");
  const frame = doc.createElementNS("http://www.w3.org/2000/svg", "rect");
  frame.setAttribute("x", "0");
  frame.setAttribute("y", "0");
  frame.setAttribute("width", String(meta.width));
  frame.setAttribute("height", String(meta.height));
  frame.setAttribute("fill", "#111");
  svg.appendChild(frame);
  const boxes: Array<[UnitMetadata["o0"], string, string]> = [
    [meta.o0, "red", "subject"],
  ];
  if (meta.o1) {
    boxes.push([meta.o1, "blue", "target"]);
  }
  for (const [obj, color, role] of boxes) {
    const [x1, y1, x2, y2] = obj.bbox;
    const rect = doc.createElementNS("http://www.w3.org/2000/svg", "rect");
    rect.setAttribute("x", String(x1));
    rect.setAttribute("y", String(y1));
    rect.setAttribute("width", String(x2 - x1));
    rect.setAttribute("height", String(y2 - y1));
    rect.setAttribute("fill", "none");
    rect.setAttribute("stroke", color);
    rect.setAttribute("stroke-width", "2");
    rect.setAttribute("data-role", role);
    svg.appendChild(rect);
    const label = doc.createElementNS("http://www.w3.org/2000/svg", "text");
    label.setAttribute("x", String(x1));
    label.setAttribute("y", String(Math.max(y1 - 3, 10)));
    label.setAttribute("fill", color);
    label.setAttribute("font-size", "10");
    label.textContent = `${obj.oname} (${role})`;
    svg.appendChild(label);
  }
  return svg;
}

/** Candidate table with weight bars normalized to the current maximum. */
export function renderCandidates(
  doc: Document,
  view: CandidatesView,
): HTMLElement {
  const root = doc.createElement("table");
  root.className = "candidates";
  const max = Math.max(...view.weights, 1e-9);
  view.candidates.forEach((name, i) => {
    const row = doc.createElement("tr");
    const label = doc.createElement("td");
    label.textContent = name;
    const barCell = doc.createElement("td");
    const bar = doc.createElement("div");
    bar.className = "weight-bar";
    bar.style.width = `${(100 * (view.weights[i] ?? 0)) / max}%`;
    bar.title = (view.weights[i] ?? 0).toFixed(3);
    barCell.appendChild(bar);
    const value = doc.createElement("td");
    value.textContent = (view.weights[i] ?? 0).toFixed(3);
    row.append(label, barCell, value);
    root.appendChild(row);
  });
  return root;
}

export function renderResult(doc: Document, view: ResultView): HTMLElement {
  const root = doc.createElement("div");
  root.className = "result";
  if (view.state === "failed") {
    root.textContent = `query failed: ${view.error ?? "unknown error"}`;
    return root;
  }
  if (view.state !== "done" || !view.result) {
    root.textContent = `state: ${view.state}`;
    return root;
  }
  const r = view.result;
  const title = doc.createElement("h3");
  title.textContent = "query complete";
  root.appendChild(title);
  const dsl = doc.createElement("code");
  dsl.textContent = r.dsl_text;
  root.appendChild(dsl);
  const vids = doc.createElement("p");
  vids.className = "matched-vids";
  vids.textContent = `matched videos: ${r.matched_vids.join(", ") || "none"}`;
  root.appendChild(vids);
  const list = doc.createElement("ul");
  list.className = "generated";
  for (const g of r.generated) {
    const item = doc.createElement("li");
    item.textContent = g.dummied
      ? `${g.name}: no good candidate, predicate dummied`
      : `${g.name}: chose a ${g.kind} implementation`;
    list.appendChild(item);
  }
  root.appendChild(list);
  return root;
}

export function renderErrorBanner(doc: Document, message: string): HTMLElement {
  const banner = doc.createElement("div");
  banner.className = "error-banner";
  banner.setAttribute("role", "alert");
  banner.textContent = `connection problem: ${message} — retrying keeps your
pending sample; no label was lost`.replace(/\s+/g, " ");
  return banner;
}

/** y / n / s keyboard shortcuts for labeling throughput. */
export function bindKeyboard(
  doc: Document,
  session: LabelSession,
): (ev: KeyboardEvent) => void {
  const handler = (ev: KeyboardEvent) => {
    if (ev.key === "y") void session.submit(true);
    else if (ev.key === "n") void session.submit(false);
    else if (ev.key === "s") void session.skip();
  };
  doc.addEventListener("keydown", handler as EventListener);
  return handler;
}
