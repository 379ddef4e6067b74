/** 3D viewport: scene cloud, robot-hand samples, and fingertip targets.
 *
 * Pure display — geometry arrives fully posed from the service payload,
 * already capped by the service's render limits.
 */

import * as THREE from "three";

import type { SessionState } from "./api.js";
import { decodeRgb, decodeXyz, type CloudPayload } from "./payload.js";

const HAND_COLOR = new THREE.Color(0x4a9eff);
const TARGET_COLOR = new THREE.Color(0xff5544);

function cloudPoints(size: number): THREE.Points {
  const geometry = new THREE.BufferGeometry();
  const material = new THREE.PointsMaterial({
    size,
    vertexColors: true,
    sizeAttenuation: true,
  });
  return new THREE.Points(geometry, material);
}

function setCloud(points: THREE.Points, cloud: CloudPayload | null): void {
  const geometry = points.geometry;
  if (cloud === null || cloud.count === 0) {
    geometry.setAttribute("position", new THREE.BufferAttribute(new Float32Array(0), 3));
    geometry.setAttribute("color", new THREE.BufferAttribute(new Float32Array(0), 3));
    return;
  }
  const xyz = decodeXyz(cloud);
  const rgb = decodeRgb(cloud);
  const colors = new Float32Array(rgb.length);
  for (let i = 0; i < rgb.length; i++) {
    colors[i] = rgb[i]! / 255;
  }
  geometry.setAttribute("position", new THREE.BufferAttribute(xyz, 3));
  geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
  geometry.computeBoundingSphere();
}

function setUniformCloud(
  points: THREE.Points,
  cloud: CloudPayload | null,
  color: THREE.Color,
): void {
  if (cloud === null) {
    setCloud(points, null);
    return;
  }
  const xyz = decodeXyz(cloud);
  const colors = new Float32Array(xyz.length);
  for (let i = 0; i < xyz.length; i += 3) {
    colors[i] = color.r;
    colors[i + 1] = color.g;
    colors[i + 2] = color.b;
  }
  const geometry = points.geometry;
  geometry.setAttribute("position", new THREE.BufferAttribute(xyz, 3));
  geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
  geometry.computeBoundingSphere();
}

export class View3d {
  private readonly renderer: THREE.WebGLRenderer;
  private readonly scene = new THREE.Scene();
  private readonly camera: THREE.PerspectiveCamera;
  private readonly sceneCloud = cloudPoints(0.004);
  private readonly handCloud = cloudPoints(0.006);
  private readonly targets = cloudPoints(0.014);

  // simple orbit: spherical angles around a focus point
  private azimuth = 0.7;
  private elevation = 0.5;
  private distance = 0.7;
  private readonly focus = new THREE.Vector3(0, 0, 0.05);
  private needsRender = true;

  constructor(private readonly canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(50, 1, 0.01, 50);
    this.scene.background = new THREE.Color(0x14141e);
    this.scene.add(this.sceneCloud, this.handCloud, this.targets);
    this.bindInput();
    this.resize();
    const loop = () => {
      if (this.needsRender) {
        this.needsRender = false;
        this.placeCamera();
        this.renderer.render(this.scene, this.camera);
      }
      requestAnimationFrame(loop);
    };
    requestAnimationFrame(loop);
  }

  update(state: SessionState): void {
    setCloud(this.sceneCloud, state.scene_cloud);
    setUniformCloud(this.handCloud, state.hand_cloud, HAND_COLOR);
    const flat = new Float32Array(state.targets.length * 3);
    state.targets.forEach((t, i) => {
      flat[i * 3] = t[0] ?? 0;
      flat[i * 3 + 1] = t[1] ?? 0;
      flat[i * 3 + 2] = t[2] ?? 0;
    });
    const colors = new Float32Array(flat.length);
    for (let i = 0; i < colors.length; i += 3) {
      colors[i] = TARGET_COLOR.r;
      colors[i + 1] = TARGET_COLOR.g;
      colors[i + 2] = TARGET_COLOR.b;
    }
    this.targets.geometry.setAttribute("position", new THREE.BufferAttribute(flat, 3));
    this.targets.geometry.setAttribute("color", new THREE.BufferAttribute(colors, 3));
    this.needsRender = true;
  }

  resize(): void {
    const width = this.canvas.clientWidth || 640;
    const height = this.canvas.clientHeight || 480;
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / height;
    this.camera.updateProjectionMatrix();
    this.needsRender = true;
  }

  private placeCamera(): void {
    const ce = Math.cos(this.elevation);
    this.camera.position.set(
      this.focus.x + this.distance * ce * Math.cos(this.azimuth),
      this.focus.y + this.distance * ce * Math.sin(this.azimuth),
      this.focus.z + this.distance * Math.sin(this.elevation),
    );
    this.camera.up.set(0, 0, 1);
    this.camera.lookAt(this.focus);
  }

  private bindInput(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.addEventListener("pointerdown", (ev) => {
      dragging = true;
      lastX = ev.clientX;
      lastY = ev.clientY;
      this.canvas.setPointerCapture(ev.pointerId);
    });
    this.canvas.addEventListener("pointermove", (ev) => {
      if (!dragging) {
        return;
      }
      this.azimuth -= (ev.clientX - lastX) * 0.01;
      this.elevation = Math.min(
        1.5,
        Math.max(-1.5, this.elevation + (ev.clientY - lastY) * 0.01),
      );
      lastX = ev.clientX;
      lastY = ev.clientY;
      this.needsRender = true;
    });
    this.canvas.addEventListener("pointerup", () => {
      dragging = false;
    });
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.distance = Math.min(5, Math.max(0.05, this.distance * (ev.deltaY > 0 ? 1.1 : 0.9)));
      this.needsRender = true;
    });
  }
}
