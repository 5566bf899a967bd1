/** three.js scene-graph builders. Everything here is plain geometry and
 * materials, constructible without a GL context, so tests can assert on the
 * graph; only main.ts touches the WebGL renderer. */

import * as THREE from "three";
import { FramePayload, GoalPayload, ScenePayload, Vec2 } from "./protocol.js";

const CATEGORY_COLORS: Record<string, number> = {
  chair: 0x4f8fba,
  armchair: 0x5fa052,
  sofa: 0xa05a6e,
  lsofa: 0xa0785a,
  table: 0x8a8a5a,
  bed: 0x7a5aa0,
};

const TRACE_COLORS = [0xffc857, 0x63d2ff, 0xff6b6b, 0x9bf6a3, 0xe599f7, 0xffa94d];

export function categoryColor(category: string): number {
  return CATEGORY_COLORS[category] ?? 0x888888;
}

/** Boxes for every scene object plus a ground grid; meshes carry their
 * object id in userData for picking. */
export function buildSceneGroup(scene: ScenePayload): THREE.Group {
  const group = new THREE.Group();
  group.name = "scene";
  for (const obj of scene.objects) {
    const holder = new THREE.Group();
    holder.name = `object:${obj.id}`;
    holder.position.set(obj.position[0], obj.position[1], obj.position[2]);
    holder.rotation.y = obj.yaw;
    for (const box of obj.boxes) {
      const geo = new THREE.BoxGeometry(
        box.halfExtents[0] * 2,
        box.halfExtents[1] * 2,
        box.halfExtents[2] * 2,
      );
      const mat = new THREE.MeshLambertMaterial({ color: categoryColor(obj.category) });
      const mesh = new THREE.Mesh(geo, mat);
      mesh.position.set(box.center[0], box.center[1], box.center[2]);
      mesh.rotation.y = box.yaw;
      mesh.userData.objectId = obj.id;
      holder.add(mesh);
    }
    group.add(holder);
  }
  const [lo, hi] = [scene.bounds.min, scene.bounds.max];
  const span = Math.max(hi[0] - lo[0], hi[1] - lo[1]);
  const grid = new THREE.GridHelper(span, Math.round(span), 0x333a44, 0x232830);
  grid.position.set((lo[0] + hi[0]) / 2, 0, (lo[1] + hi[1]) / 2);
  grid.name = "floor";
  group.add(grid);
  return group;
}

/** Sphere at the goal with an arrow for its facing direction. */
export function goalMarker(goal: GoalPayload): THREE.Group {
  const group = new THREE.Group();
  group.name = "goal";
  const sphere = new THREE.Mesh(
    new THREE.SphereGeometry(0.08, 12, 8),
    new THREE.MeshBasicMaterial({ color: 0xff4455 }),
  );
  sphere.position.set(goal.position[0], goal.position[1], goal.position[2]);
  group.add(sphere);
  const dir = new THREE.Vector3(...goal.direction).normalize();
  const origin = new THREE.Vector3(...goal.position);
  group.add(new THREE.ArrowHelper(dir, origin, 0.4, 0xff4455, 0.12, 0.06));
  return group;
}

export function pathLine(waypoints: Vec2[], color = 0x4fd1c5): THREE.Line {
  const pts = waypoints.map(([x, z]) => new THREE.Vector3(x, 0.02, z));
  const geo = new THREE.BufferGeometry().setFromPoints(pts);
  const line = new THREE.Line(geo, new THREE.LineBasicMaterial({ color }));
  line.name = "path";
  return line;
}

export function traceLine(points: Vec2[], index: number): THREE.Line {
  const pts = points.map(([x, z]) => new THREE.Vector3(x, 0.01, z));
  const geo = new THREE.BufferGeometry().setFromPoints(pts);
  const color = TRACE_COLORS[index % TRACE_COLORS.length];
  const line = new THREE.Line(geo, new THREE.LineBasicMaterial({ color }));
  line.name = `trace:${index}`;
  return line;
}

/** One line segment per parented bone, positions updated in place. */
export function skeletonLines(parents: number[]): THREE.LineSegments {
  const bones = parents.filter((p) => p >= 0).length;
  const positions = new Float32Array(bones * 2 * 3);
  const geo = new THREE.BufferGeometry();
  geo.setAttribute("position", new THREE.BufferAttribute(positions, 3));
  const seg = new THREE.LineSegments(
    geo,
    new THREE.LineBasicMaterial({ color: 0xf2f2f2 }),
  );
  seg.name = "skeleton";
  seg.frustumCulled = false;
  seg.userData.parents = parents;
  return seg;
}

export function updateSkeleton(seg: THREE.LineSegments, frame: FramePayload): void {
  const parents: number[] = seg.userData.parents;
  const attr = seg.geometry.getAttribute("position") as THREE.BufferAttribute;
  const arr = attr.array as Float32Array;
  let k = 0;
  for (let j = 0; j < parents.length; j++) {
    const p = parents[j];
    if (p < 0) continue;
    const a = frame.joints[j];
    const b = frame.joints[p];
    arr[k++] = a[0];
    arr[k++] = a[1];
    arr[k++] = a[2];
    arr[k++] = b[0];
    arr[k++] = b[1];
    arr[k++] = b[2];
  }
  attr.needsUpdate = true;
}

export interface Cameras {
  top: THREE.OrthographicCamera;
  persp: THREE.PerspectiveCamera;
}

export function makeCameras(scene: ScenePayload, aspect: number): Cameras {
  const [lo, hi] = [scene.bounds.min, scene.bounds.max];
  const cx = (lo[0] + hi[0]) / 2;
  const cz = (lo[1] + hi[1]) / 2;
  const half = Math.max(hi[0] - lo[0], hi[1] - lo[1]) / 2 + 1;
  const top = new THREE.OrthographicCamera(
    -half * aspect,
    half * aspect,
    half,
    -half,
    0.1,
    50,
  );
  top.position.set(cx, 20, cz);
  top.lookAt(cx, 0, cz);
  const persp = new THREE.PerspectiveCamera(50, aspect, 0.1, 100);
  persp.position.set(cx - half * 1.2, half * 1.1, cz + half * 1.4);
  persp.lookAt(cx, 0.5, cz);
  return { top, persp };
}
