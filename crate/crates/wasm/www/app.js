import init, { normalize, extract, error_report } from "./pkg/evidence_wasm.js";

const $ = (id) => document.getElementById(id);
const status = (msg) => { $("status").textContent = msg; };

function escape(text) {
  const d = document.createElement("div");
  d.textContent = text;
  return d.innerHTML;
}

function guarded(fn) {
  return () => {
    status("");
    try { fn(); } catch (e) { status(String(e.message ?? e)); }
  };
}

function showSections() {
  const options = JSON.stringify({
    strip_toc: $("drop-toc").checked,
    strip_repeated_header_footer: $("drop-repeated").checked,
  });
  const doc = JSON.parse(normalize($("html").value, options));
  const rows = doc.sections.map((s) =>
    `<tr><td>${s.section_id}</td><td>${escape(s.heading || "(preamble)")}</td>` +
    `<td>${s.start_offset}..${s.end_offset}</td><td>${escape(s.body.slice(0, 80))}</td></tr>`);
  $("sections").innerHTML =
    `<p>${escape(doc.doc_id)}, ${doc.sections.length} sections</p>` +
    `<table><tr><th>id</th><th>heading</th><th>offsets</th><th>body</th></tr>${rows.join("")}</table>`;
}

function showResults() {
  const run = JSON.parse(extract($("html").value, $("catalog").value, $("vectors").value, $("pipeline").value));
  const fmt = (x) => (x == null ? "" : x.toFixed(3));
  const rows = run.results.map((r, i) => {
    const scores = r.result.section_scores
      .map((s) => `${s.section_id}: ${fmt(s.model_score)} ${fmt(s.similarity)}`).join("<br>");
    return `<tr data-i="${i}"><td>${r.result.pipeline}</td><td>${escape(r.result.answer.text)}</td>` +
      `<td>${r.result.winning_section_id ?? ""}</td><td>${escape(r.assessment.rendered)}</td>` +
      `<td>${r.assessment.outcome}</td><td>${scores}</td></tr>`;
  });
  const skipped = run.skipped.map(([p, why]) => `<li>${p}: ${escape(why)}</li>`).join("");
  $("results").innerHTML =
    `<table><tr><th>pipeline</th><th>answer</th><th>section</th><th>hint</th><th>outcome</th>` +
    `<th>section scores (model, similarity)</th></tr>${rows.join("")}</table>` +
    (skipped ? `<ul>${skipped}</ul>` : "");
  const show = (i) => { $("context").innerHTML = run.results[i]?.highlighted_html ?? ""; };
  $("results").querySelectorAll("tr[data-i]").forEach((tr) => {
    tr.addEventListener("click", () => show(Number(tr.dataset.i)));
  });
  show(0);
  $("context").querySelector("mark")?.scrollIntoView({ block: "center" });
}

function showReport() {
  const n = (id) => Math.max(0, Number($(id).value) || 0);
  const out = JSON.parse(error_report(n("c-no"), n("c-partial"), n("c-false"), n("c-missing")));
  $("report-out").textContent = out.table;
}

async function loadSample(name, target) {
  try {
    const r = await fetch(`pkg/${name}`);
    if (r.ok) $(target).value = await r.text();
  } catch (_) { /* samples are optional */ }
}

await init();
await Promise.all([
  loadSample("password_policy.html", "html"),
  loadSample("catalog.json", "catalog"),
  loadSample("vectors.txt", "vectors"),
]);
$("normalize").addEventListener("click", guarded(showSections));
$("extract").addEventListener("click", guarded(showResults));
$("report").addEventListener("click", guarded(showReport));
