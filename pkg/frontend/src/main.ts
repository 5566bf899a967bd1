/** Browser entry point: dial the session service, render the scene, and
 * translate clicks and buttons into protocol messages. */

import * as THREE from "three";
import { ViewModel } from "./model.js";
import {
  buildSceneGroup,
  goalMarker,
  makeCameras,
  pathLine,
  skeletonLines,
  traceLine,
  updateSkeleton,
} from "./render.js";
import { WsConnection } from "./transport.js";

const params = new URLSearchParams(location.search);
const url = params.get("ws") ?? `ws://${location.hostname || "127.0.0.1"}:8765`;

const vm = new ViewModel();
const canvas = document.getElementById("view") as HTMLCanvasElement;
const renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
renderer.setSize(canvas.clientWidth, canvas.clientHeight, false);

const world = new THREE.Scene();
world.background = new THREE.Color(0x14171c);
world.add(new THREE.AmbientLight(0xffffff, 0.7));
const sun = new THREE.DirectionalLight(0xffffff, 1.2);
sun.position.set(4, 10, 3);
world.add(sun);

let sceneGroup: THREE.Group | null = null;
let skeleton: THREE.LineSegments | null = null;
let pathObj: THREE.Line | null = null;
let goalObj: THREE.Group | null = null;
const traceObjs: THREE.Line[] = [];
let cameras: ReturnType<typeof makeCameras> | null = null;
let topView = true;

const statusEl = document.getElementById("status")!;
const fpsEl = document.getElementById("fps")!;
const bannerEl = document.getElementById("banner")!;
const toastsEl = document.getElementById("toasts")!;
const actionSel = document.getElementById("action") as HTMLSelectElement;
const seedInput = document.getElementById("seed") as HTMLInputElement;

const conn = new WsConnection(url, {
  onLine(line) {
    vm.handleLine(line);
    syncScene();
  },
  onOpen() {
    vm.markOpen();
    conn.send({ type: "hello" });
  },
  onClose() {
    vm.markClosed();
  },
});

function syncScene(): void {
  if (vm.scene && !sceneGroup) {
    sceneGroup = buildSceneGroup(vm.scene);
    world.add(sceneGroup);
    skeleton = skeletonLines(vm.scene.skeleton.parents);
    world.add(skeleton);
    cameras = makeCameras(vm.scene, canvas.clientWidth / canvas.clientHeight);
    actionSel.innerHTML = "";
    for (const a of vm.scene.actions) {
      const opt = document.createElement("option");
      opt.value = a;
      opt.textContent = a;
      actionSel.appendChild(opt);
    }
    actionSel.value = vm.selectedAction;
  }
  if (vm.path.length > 0) {
    if (pathObj) world.remove(pathObj);
    pathObj = pathLine(vm.path);
    world.add(pathObj);
  }
  if (vm.goal) {
    if (goalObj) world.remove(goalObj);
    goalObj = goalMarker(vm.goal);
    world.add(goalObj);
  }
  while (traceObjs.length < vm.traces.length) {
    const line = traceLine([], traceObjs.length);
    traceObjs.push(line);
    world.add(line);
  }
}

// click to command: raycast into the object meshes
const raycaster = new THREE.Raycaster();
canvas.addEventListener("click", (ev) => {
  if (!sceneGroup || !cameras) return;
  const rect = canvas.getBoundingClientRect();
  const ndc = new THREE.Vector2(
    ((ev.clientX - rect.left) / rect.width) * 2 - 1,
    -((ev.clientY - rect.top) / rect.height) * 2 + 1,
  );
  raycaster.setFromCamera(ndc, topView ? cameras.top : cameras.persp);
  const hits = raycaster.intersectObjects(sceneGroup.children, true);
  const hit = hits.find((h) => h.object.userData.objectId);
  const msg = vm.commandGoal(hit ? (hit.object.userData.objectId as string) : null);
  if (msg) conn.send(msg);
});

actionSel.addEventListener("change", () => {
  vm.selectedAction = actionSel.value;
});
seedInput.addEventListener("change", () => {
  vm.seed = Number(seedInput.value) || 0;
});
document.getElementById("resample")!.addEventListener("click", () => {
  const msg = vm.resample();
  seedInput.value = String(vm.seed);
  conn.send(msg);
});
document.getElementById("pause")!.addEventListener("click", () => {
  conn.send(vm.playing ? vm.pause() : vm.resume());
  document.getElementById("pause")!.textContent = vm.playing ? "pause" : "resume";
});
document.getElementById("camera")!.addEventListener("click", () => {
  topView = !topView;
});

// fixed-step playback at the stream rate; render at display rate
let acc = 0;
let last = performance.now();
let fpsAvg = 0;

function tick(now: number): void {
  const dt = Math.min(0.25, (now - last) / 1000);
  last = now;
  fpsAvg = 0.9 * fpsAvg + 0.1 * (1 / Math.max(dt, 1e-6));
  const fps = vm.scene?.fps ?? 30;
  acc += dt;
  while (acc >= 1 / fps) {
    acc -= 1 / fps;
    const frame = vm.nextFrame();
    if (frame && skeleton) updateSkeleton(skeleton, frame);
  }
  for (let i = 0; i < traceObjs.length; i++) {
    const pts = vm.traces[i].points;
    const geo = traceObjs[i].geometry;
    if (geo.getAttribute("position")?.count !== pts.length) {
      geo.setFromPoints(pts.map(([x, z]) => new THREE.Vector3(x, 0.01, z)));
    }
  }
  statusEl.textContent = `${vm.status} | frame ${vm.lastFrame?.frame ?? "-"} | buffered ${vm.buffer.size}`;
  fpsEl.textContent = `${fpsAvg.toFixed(0)} fps`;
  bannerEl.style.display = vm.connection === "closed" ? "block" : "none";
  toastsEl.textContent = vm.toasts.slice(-3).join("\n");
  if (cameras) renderer.render(world, topView ? cameras.top : cameras.persp);
  requestAnimationFrame(tick);
}
requestAnimationFrame(tick);
