import init, { field_strip, routing, ensemble_fit } from "./pkg/nowcast_web.js";

const $ = (id) => document.getElementById(id);

function bindRange(input, format, onChange) {
  const out = input.nextElementSibling;
  const show = () => { if (out) out.textContent = " " + format(input.value); };
  input.addEventListener("input", () => { show(); onChange(); });
  show();
}

function guarded(section, fn) {
  return () => {
    const old = section.querySelector(".err");
    if (old) old.remove();
    try {
      fn();
    } catch (e) {
      const p = document.createElement("p");
      p.className = "err";
      p.textContent = String(e);
      section.appendChild(p);
    }
  };
}

function drawGray(canvas, img, scale) {
  canvas.width = img.width;
  canvas.height = img.height;
  canvas.style.width = img.width * scale + "px";
  canvas.style.height = img.height * scale + "px";
  const ctx = canvas.getContext("2d");
  ctx.putImageData(new ImageData(new Uint8ClampedArray(img.rgba()), img.width, img.height), 0, 0);
  img.free();
}

function setupField() {
  const redraw = guarded($("field"), () => {
    const img = field_strip(
      BigInt($("f-seed").value || 0),
      8,
      Number($("f-blobs").value),
      Number($("f-speed").value),
      Number($("f-noise").value),
      Number($("f-diff").value),
      Number($("f-sparsity").value),
      $("f-rain").checked,
      $("f-contour").checked,
    );
    drawGray($("f-canvas"), img, 4);
  });
  for (const id of ["f-blobs", "f-speed", "f-noise", "f-diff", "f-sparsity"]) {
    bindRange($(id), (v) => v, redraw);
  }
  for (const id of ["f-seed", "f-rain", "f-contour"]) $(id).addEventListener("input", redraw);
  redraw();
}

function setupRouting() {
  const redraw = guarded($("routing"), () => {
    const tau = Number($("r-tau").value);
    const r = routing(1n, Number($("r-n").value), Number($("r-sparsity").value), tau);
    const maxima = r.maxima();
    const used = tau > 0 ? tau : r.calibrated;
    $("r-summary").textContent =
      `calibrated threshold ${r.calibrated.toFixed(4)}, using ${used.toFixed(4)}: ` +
      `${r.dry} dry / ${r.wet} wet`;
    const c = $("r-canvas");
    const ctx = c.getContext("2d");
    ctx.clearRect(0, 0, c.width, c.height);
    const bins = 64;
    const counts = new Array(bins).fill(0);
    for (const m of maxima) counts[Math.min(bins - 1, Math.floor(m * bins))]++;
    const top = Math.max(...counts, 1);
    const bw = c.width / bins;
    counts.forEach((n, i) => {
      ctx.fillStyle = (i + 0.5) / bins < used ? "#c9a227" : "#2f6db5";
      const h = (n / top) * (c.height - 10);
      ctx.fillRect(i * bw + 1, c.height - h, bw - 2, h);
    });
    ctx.strokeStyle = "#b00";
    ctx.beginPath();
    ctx.moveTo(used * c.width, 0);
    ctx.lineTo(used * c.width, c.height);
    ctx.stroke();
    r.free();
  });
  bindRange($("r-n"), (v) => v, redraw);
  bindRange($("r-sparsity"), (v) => v, redraw);
  bindRange($("r-tau"), (v) => (Number(v) > 0 ? v : "auto"), redraw);
  redraw();
}

function setupEnsemble() {
  const members = [
    { bias: 0.05, noise: 0.2 },
    { bias: -0.1, noise: 0.1 },
    { bias: 0.0, noise: 0.3 },
  ];
  const box = $("e-members");
  const redraw = guarded($("ensemble"), () => {
    const f = ensemble_fit(
      7n,
      Float64Array.from(members.map((m) => m.bias)),
      Float64Array.from(members.map((m) => m.noise)),
      Math.pow(10, Number($("e-lambda").value)),
    );
    const [eq, rd, cs, mm] = [f.equal(), f.ridge(), f.constrained(), f.member_mse()];
    const em = f.ensemble_mse();
    const fmt = (x) => x.toFixed(4);
    let html = "<tr><th></th>" + members.map((_, i) => `<th>member ${i + 1}</th>`).join("") + "<th>sum</th><th>fit MSE</th></tr>";
    const row = (name, w, e) =>
      `<tr><th>${name}</th>${Array.from(w).map((x) => `<td>${fmt(x)}</td>`).join("")}` +
      `<td>${fmt(w.reduce((a, b) => a + b, 0))}</td><td>${e.toExponential(3)}</td></tr>`;
    html += `<tr><th>member MSE</th>${Array.from(mm).map((x) => `<td>${x.toExponential(3)}</td>`).join("")}<td></td><td></td></tr>`;
    html += row("equal", eq, em[0]) + row("ridge", rd, em[1]) + row("constrained", cs, em[2]);
    $("e-table").innerHTML = html;
    f.free();
  });
  members.forEach((m, i) => {
    const div = document.createElement("div");
    div.innerHTML =
      `member ${i + 1}: <label>bias <input type="range" min="-0.3" max="0.3" step="0.01" value="${m.bias}"><span class="out"></span></label>` +
      `<label>noise <input type="range" min="0" max="0.6" step="0.01" value="${m.noise}"><span class="out"></span></label>`;
    const [b, n] = div.querySelectorAll("input");
    bindRange(b, (v) => v, () => { m.bias = Number(b.value); redraw(); });
    bindRange(n, (v) => v, () => { m.noise = Number(n.value); redraw(); });
    box.appendChild(div);
  });
  bindRange($("e-lambda"), (v) => v, redraw);
  redraw();
}

init().then(() => {
  $("status").textContent = "";
  setupField();
  setupRouting();
  setupEnsemble();
}).catch((e) => {
  $("status").textContent = "failed to load: " + e;
  $("status").className = "err";
});
