/** Decoding for the render payloads shipped by the session service.
 *
 * Point clouds arrive as base64 strings: xyz is little-endian float32
 * triplets, rgb is raw bytes, both length-checked against `count`.
 */

export interface CloudPayload {
  count: number;
  xyz: string;
  rgb: string;
}

export function decodeBase64(data: string): Uint8Array {
  const binary = atob(data);
  const bytes = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    bytes[i] = binary.charCodeAt(i);
  }
  return bytes;
}

/** Base64 xyz -> flat [x0,y0,z0,x1,...] regardless of host endianness. */
export function decodeXyz(cloud: CloudPayload): Float32Array {
  const bytes = decodeBase64(cloud.xyz);
  if (bytes.length !== cloud.count * 12) {
    throw new Error(
      `cloud xyz payload is ${bytes.length} bytes, expected ${cloud.count * 12}`,
    );
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(cloud.count * 3);
  for (let i = 0; i < out.length; i++) {
    out[i] = view.getFloat32(i * 4, true);
  }
  return out;
}

export function decodeRgb(cloud: CloudPayload): Uint8Array {
  const bytes = decodeBase64(cloud.rgb);
  if (bytes.length !== cloud.count * 3) {
    throw new Error(
      `cloud rgb payload is ${bytes.length} bytes, expected ${cloud.count * 3}`,
    );
  }
  return bytes;
}

/** Mean point of a flat xyz array; [0,0,0] for an empty cloud. */
export function centroid(xyz: Float32Array): [number, number, number] {
  const n = xyz.length / 3;
  if (n === 0) {
    return [0, 0, 0];
  }
  let sx = 0;
  let sy = 0;
  let sz = 0;
  for (let i = 0; i < n; i++) {
    sx += xyz[i * 3]!;
    sy += xyz[i * 3 + 1]!;
    sz += xyz[i * 3 + 2]!;
  }
  return [sx / n, sy / n, sz / n];
}
