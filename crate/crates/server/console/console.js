// Minimal status page: subscribes to joint and object topics over /ws.
(function () {
  const status = document.getElementById("status");
  const ws = new WebSocket(`ws://${location.host}/ws`);
  let id = 0;

  function request(name, payload) {
    ws.send(JSON.stringify({ kind: "request", name, id: ++id, payload }));
  }

  function rows(table, items) {
    table.innerHTML = items.map((r) => `<tr>${r.map((c) => `<td>${c}</td>`).join("")}</tr>`).join("");
  }

  ws.onopen = () => {
    status.textContent = "connected";
    request("Subscribe", { topic: "joint_states" });
    request("Subscribe", { topic: "object_poses" });
  };
  ws.onclose = () => (status.textContent = "disconnected");
  ws.onmessage = (ev) => {
    const f = JSON.parse(ev.data);
    if (f.kind === "error") console.warn(f.name, f.payload.message);
    if (f.kind !== "topic") return;
    if (f.name === "joint_states") {
      rows(document.getElementById("joints"),
        f.payload.name.map((n, i) => [n, f.payload.position[i].toFixed(3)]));
    } else if (f.name === "object_poses") {
      rows(document.getElementById("objects"),
        f.payload.objects.map((o) => [o.instance_id, o.pose.position.map((v) => v.toFixed(3)).join(", ")]));
    }
  };
})();
