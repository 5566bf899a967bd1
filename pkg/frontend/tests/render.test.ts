import * as THREE from "three";
import { describe, expect, it } from "vitest";
import {
  buildSceneGroup,
  goalMarker,
  pathLine,
  skeletonLines,
  traceLine,
  updateSkeleton,
} from "../src/render.js";
import { FramePayload, ScenePayload } from "../src/protocol.js";

const scene: ScenePayload = {
  objects: [
    {
      id: "chair",
      category: "chair",
      position: [2, 0, 1],
      yaw: Math.PI / 2,
      boxes: [
        { center: [0, 0.2, 0], halfExtents: [0.25, 0.2, 0.25], yaw: 0 },
        { center: [0, 0.5, -0.2], halfExtents: [0.25, 0.25, 0.05], yaw: 0 },
      ],
      goals: [{ position: [2, 0.4, 1], direction: [1, 0, 0], action: "sit" }],
    },
    {
      id: "bed",
      category: "bed",
      position: [-2, 0, -1],
      yaw: 0,
      boxes: [{ center: [0, 0.25, 0], halfExtents: [0.8, 0.25, 1.0], yaw: 0 }],
      goals: [{ position: [-2, 0.5, -1], direction: [0, 0, 1], action: "liedown" }],
    },
  ],
  bounds: { min: [-4, -4], max: [4, 4] },
  skeleton: { names: ["root", "spine", "head"], parents: [-1, 0, 1] },
  actions: ["sit", "liedown"],
  fps: 30,
};

describe("buildSceneGroup", () => {
  it("creates one pickable mesh per box, tagged with its object id", () => {
    const group = buildSceneGroup(scene);
    const meshes: THREE.Mesh[] = [];
    group.traverse((o) => {
      if ((o as THREE.Mesh).isMesh) meshes.push(o as THREE.Mesh);
    });
    expect(meshes.length).toBe(3);
    const ids = new Set(meshes.map((m) => m.userData.objectId));
    expect(ids).toEqual(new Set(["chair", "bed"]));
    const chair = group.getObjectByName("object:chair")!;
    expect(chair.position.x).toBeCloseTo(2);
    expect(chair.rotation.y).toBeCloseTo(Math.PI / 2);
  });

  it("includes a floor grid sized to the scene bounds", () => {
    const group = buildSceneGroup(scene);
    expect(group.getObjectByName("floor")).toBeDefined();
  });
});

describe("goal and path overlays", () => {
  it("goal marker has a sphere at the goal and a direction arrow", () => {
    const marker = goalMarker({ position: [2, 0.4, 1], direction: [1, 0, 0], action: "sit" });
    const sphere = marker.children.find((c) => (c as THREE.Mesh).isMesh) as THREE.Mesh;
    expect(sphere.position.toArray()).toEqual([2, 0.4, 1]);
    expect(marker.children.some((c) => c instanceof THREE.ArrowHelper)).toBe(true);
  });

  it("path and trace lines carry one vertex per point", () => {
    const path = pathLine([[0, 0], [1, 2], [3, 3]]);
    expect(path.geometry.getAttribute("position").count).toBe(3);
    const trace = traceLine([[0, 0], [0.5, 0.5]], 1);
    expect(trace.geometry.getAttribute("position").count).toBe(2);
  });
});

describe("skeleton", () => {
  it("allocates two vertices per parented bone and updates in place", () => {
    const seg = skeletonLines(scene.skeleton.parents);
    const attr = seg.geometry.getAttribute("position");
    expect(attr.count).toBe(4); // two bones
    const frame: FramePayload = {
      frame: 0,
      joints: [
        [0, 0.9, 0],
        [0, 1.2, 0],
        [0.1, 1.5, 0],
      ],
      root: { position: [0, 0], forward: [0, 1] },
      contacts: [0, 0, 0, 0, 0],
      actions: [1, 0, 0, 0, 0],
      subgoal: { position: [0, 0, 0], direction: [0, 0, 1], action: "walk" },
      status: "navigating",
    };
    updateSkeleton(seg, frame);
    const arr = attr.array as Float32Array;
    const f32 = (vals: number[]) => vals.map((v) => Math.fround(v));
    // first segment: spine -> root, second: head -> spine
    expect(Array.from(arr.slice(0, 6))).toEqual(f32([0, 1.2, 0, 0, 0.9, 0]));
    expect(Array.from(arr.slice(6, 12))).toEqual(f32([0.1, 1.5, 0, 0, 1.2, 0]));
  });
});
