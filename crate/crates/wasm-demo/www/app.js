import init, { reward_ladder, scan_source, compare_outputs } from "./pkg/ladder_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function escape(s) {
  return s.replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

function bar(value, cls) {
  return `<span class="bar ${cls}" style="width:${(value * 12).toFixed(2)}rem"></span>`;
}

function renderLadder() {
  let data;
  try {
    data = JSON.parse(reward_ladder(num("alpha"), num("k"), num("total"), num("high"), num("medium"), num("low")));
  } catch (e) {
    $("ladder").innerHTML = `<p class="err">${escape(String(e))}</p>`;
    return;
  }
  const rows = data.rungs.map((r) => `<tr>
      <td>${r.stage}</td><td>${r.k}</td>
      <td>${r.r_func_partial.toFixed(3)}</td><td>${r.r_func_binary.toFixed(3)}</td>
      <td>${r.r_partial.toFixed(3)} ${bar(r.r_partial, "")}</td>
      <td>${r.r_binary.toFixed(3)} ${bar(r.r_binary, "bin")}</td></tr>`).join("");
  $("ladder").innerHTML = `<p>&beta; = ${data.beta.toFixed(2)}, R_sec = ${data.r_sec.toFixed(2)}</p>
    <table><tr><th>stage</th><th>k</th><th>R_func partial</th><th>R_func binary</th>
    <th>R partial</th><th>R binary</th></tr>${rows}</table>`;
}

function renderScan() {
  const data = JSON.parse(scan_source($("source").value));
  const rows = data.findings.map((f) =>
    `<tr><td>${f.line}</td><td class="${f.severity}">${f.severity}</td><td>${f.rule_id}</td><td>${escape(f.message)}</td></tr>`).join("");
  $("scan").innerHTML = `<p>R_sec = <b>${data.r_sec.toFixed(2)}</b> from ${data.findings.length} finding(s)</p>
    ${rows ? `<table><tr><th>line</th><th>severity</th><th>rule</th><th>message</th></tr>${rows}</table>` : ""}
    <details><summary>what the rules see</summary><pre>${escape(data.masked)}</pre></details>`;
}

function renderCompare() {
  const data = JSON.parse(compare_outputs($("actual").value, $("expected").value));
  const verdict = (ok) => (ok ? "match" : "<span class=err>mismatch</span>");
  $("compare").innerHTML = `<p>strict: ${verdict(data.strict)} &middot; token: ${verdict(data.token)}</p>
    <div class="cols"><pre>${escape(data.normalized_actual) || "(no output)"}</pre>
    <pre>${escape(data.normalized_expected)}</pre></div>`;
}

await init();
$("status").remove();
for (const id of ["alpha", "total", "k", "high", "medium", "low"]) $(id).addEventListener("input", renderLadder);
$("source").addEventListener("input", renderScan);
$("actual").addEventListener("input", renderCompare);
$("expected").addEventListener("input", renderCompare);
renderLadder();
renderScan();
renderCompare();
