/**
 * Minimal DSP for the enhancement pipeline: 16-bit mono WAV I/O, an FFT,
 * and log-mel spectra with the frame layout frames = floor((N - win) / hop) + 1.
 */
import * as fs from 'fs';

export interface MelConfig {
  fs: number;
  win: number;
  hop: number;
  nMels: number;
  fMin: number;
  fMax: number;
  logFloor: number;
}

export const DEFAULT_MEL: MelConfig = {
  fs: 11025,
  win: 256,
  hop: 64,
  nMels: 16,
  fMin: 60,
  fMax: 5000,
  logFloor: -23.025850929940457, // log(1e-10)
};

export interface MelSpectrum {
  frames: number[][]; // [nFrames][nMels], log power
  cfg: MelConfig;
  sourceLength: number;
}

export function readWav(path: string): { samples: Float64Array; fs: number } {
  const buf = fs.readFileSync(path);
  if (buf.length < 44 || buf.toString('ascii', 0, 4) !== 'RIFF' || buf.toString('ascii', 8, 12) !== 'WAVE') {
    throw new Error(`${path}: not a RIFF/WAVE file`);
  }
  let pos = 12;
  let fmt: { channels: number; rate: number; bits: number } | null = null;
  let data: Buffer | null = null;
  while (pos + 8 <= buf.length) {
    const id = buf.toString('ascii', pos, pos + 4);
    const size = buf.readUInt32LE(pos + 4);
    if (id === 'fmt ') {
      fmt = {
        channels: buf.readUInt16LE(pos + 10),
        rate: buf.readUInt32LE(pos + 12),
        bits: buf.readUInt16LE(pos + 22),
      };
    } else if (id === 'data') {
      data = buf.subarray(pos + 8, pos + 8 + size);
    }
    pos += 8 + size + (size % 2);
  }
  if (!fmt || !data) throw new Error(`${path}: missing fmt/data chunk`);
  if (fmt.channels !== 1 || fmt.bits !== 16) {
    throw new Error(`${path}: expected mono 16-bit PCM, got ${fmt.channels}ch/${fmt.bits}bit`);
  }
  const n = Math.floor(data.length / 2);
  const samples = new Float64Array(n);
  for (let i = 0; i < n; i++) samples[i] = data.readInt16LE(2 * i) / 32767;
  return { samples, fs: fmt.rate };
}

export function writeWav(path: string, samples: ArrayLike<number>, fsHz: number): void {
  const n = samples.length;
  const buf = Buffer.alloc(44 + 2 * n);
  buf.write('RIFF', 0, 'ascii');
  buf.writeUInt32LE(36 + 2 * n, 4);
  buf.write('WAVE', 8, 'ascii');
  buf.write('fmt ', 12, 'ascii');
  buf.writeUInt32LE(16, 16);
  buf.writeUInt16LE(1, 20);
  buf.writeUInt16LE(1, 22);
  buf.writeUInt32LE(fsHz, 24);
  buf.writeUInt32LE(fsHz * 2, 28);
  buf.writeUInt16LE(2, 32);
  buf.writeUInt16LE(16, 34);
  buf.write('data', 36, 'ascii');
  buf.writeUInt32LE(2 * n, 40);
  for (let i = 0; i < n; i++) {
    const v = Math.max(-1, Math.min(1, samples[i]));
    buf.writeInt16LE(Math.round(v * 32767), 44 + 2 * i);
  }
  fs.writeFileSync(path, buf);
}

/** In-place iterative radix-2 FFT; lengths must be powers of two. */
export function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  if ((n & (n - 1)) !== 0) throw new Error(`FFT length ${n} is not a power of two`);
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const ang = (-2 * Math.PI) / len;
    const wRe = Math.cos(ang);
    const wIm = Math.sin(ang);
    for (let i = 0; i < n; i += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len / 2; k++) {
        const uRe = re[i + k];
        const uIm = im[i + k];
        const vRe = re[i + k + len / 2] * curRe - im[i + k + len / 2] * curIm;
        const vIm = re[i + k + len / 2] * curIm + im[i + k + len / 2] * curRe;
        re[i + k] = uRe + vRe;
        im[i + k] = uIm + vIm;
        re[i + k + len / 2] = uRe - vRe;
        im[i + k + len / 2] = uIm - vIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

export function hannWindow(n: number): Float64Array {
  const w = new Float64Array(n);
  for (let i = 0; i < n; i++) w[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / (n - 1));
  return w;
}

/** Power spectra of Hann-windowed frames: [nFrames][win/2 + 1]. */
export function stftPower(samples: ArrayLike<number>, win: number, hop: number): number[][] {
  if (samples.length < win) throw new Error(`signal (${samples.length}) shorter than window (${win})`);
  const nFrames = Math.floor((samples.length - win) / hop) + 1;
  const window = hannWindow(win);
  const out: number[][] = [];
  for (let f = 0; f < nFrames; f++) {
    const re = new Float64Array(win);
    const im = new Float64Array(win);
    for (let i = 0; i < win; i++) re[i] = samples[f * hop + i] * window[i];
    fft(re, im);
    const row = new Array<number>(win / 2 + 1);
    for (let k = 0; k <= win / 2; k++) row[k] = re[k] * re[k] + im[k] * im[k];
    out.push(row);
  }
  return out;
}

const hzToMel = (f: number) => 2595 * Math.log10(1 + f / 700);
const melToHz = (m: number) => 700 * (Math.pow(10, m / 2595) - 1);

export function melFilterbank(cfg: MelConfig): number[][] {
  const nBins = cfg.win / 2 + 1;
  const melPts: number[] = [];
  const lo = hzToMel(cfg.fMin);
  const hi = hzToMel(cfg.fMax);
  for (let i = 0; i < cfg.nMels + 2; i++) melPts.push(melToHz(lo + ((hi - lo) * i) / (cfg.nMels + 1)));
  const binHz = cfg.fs / cfg.win;
  const bank: number[][] = [];
  for (let m = 0; m < cfg.nMels; m++) {
    const row = new Array<number>(nBins).fill(0);
    const [fl, fc, fr] = [melPts[m], melPts[m + 1], melPts[m + 2]];
    for (let k = 0; k < nBins; k++) {
      const f = k * binHz;
      if (f > fl && f < fc) row[k] = (f - fl) / (fc - fl);
      else if (f >= fc && f < fr) row[k] = (fr - f) / (fr - fc);
    }
    bank.push(row);
  }
  return bank;
}

export function melBandCenters(cfg: MelConfig): number[] {
  const lo = hzToMel(cfg.fMin);
  const hi = hzToMel(cfg.fMax);
  const centers: number[] = [];
  for (let m = 1; m <= cfg.nMels; m++) centers.push(melToHz(lo + ((hi - lo) * m) / (cfg.nMels + 1)));
  return centers;
}

/** Log-compressed mel power spectrum of a mono waveform. */
export function melSpectrum(samples: ArrayLike<number>, cfg: MelConfig = DEFAULT_MEL): MelSpectrum {
  if (samples.length === 0) throw new Error('empty input');
  const padded =
    samples.length >= cfg.win
      ? samples
      : (() => {
          const p = new Float64Array(cfg.win);
          for (let i = 0; i < samples.length; i++) p[i] = samples[i];
          return p;
        })();
  const power = stftPower(padded, cfg.win, cfg.hop);
  const bank = melFilterbank(cfg);
  const frames: number[][] = [];
  for (const spec of power) {
    const row = new Array<number>(cfg.nMels);
    for (let m = 0; m < cfg.nMels; m++) {
      let acc = 0;
      const filt = bank[m];
      for (let k = 0; k < filt.length; k++) if (filt[k] > 0) acc += filt[k] * spec[k];
      row[m] = Math.log(Math.max(acc, 1e-10));
    }
    frames.push(row);
  }
  return { frames, cfg, sourceLength: samples.length };
}

/** Linear-interpolation resampling. */
export function resample(samples: ArrayLike<number>, fromFs: number, toFs: number): Float64Array {
  if (fromFs === toFs) return Float64Array.from(samples as ArrayLike<number>);
  const n = Math.round((samples.length * toFs) / fromFs);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    const pos = (i * fromFs) / toFs;
    const j = Math.min(Math.floor(pos), samples.length - 2);
    const frac = pos - j;
    out[i] = samples[j] * (1 - frac) + samples[Math.min(j + 1, samples.length - 1)] * frac;
  }
  return out;
}

/** Pad or truncate `x` to length n. */
export function fitLength(x: ArrayLike<number>, n: number): Float64Array {
  const out = new Float64Array(n);
  for (let i = 0; i < Math.min(n, x.length); i++) out[i] = x[i];
  return out;
}

/** Deterministic xorshift128+ PRNG for seeded noise. */
export class SeededRandom {
  private s0: bigint;
  private s1: bigint;

  constructor(seed: number) {
    this.s0 = BigInt(seed * 2654435761 + 1) & 0xffffffffffffffffn;
    this.s1 = BigInt(seed * 40503 + 12345) & 0xffffffffffffffffn;
    for (let i = 0; i < 8; i++) this.next();
  }

  next(): number {
    let x = this.s0;
    const y = this.s1;
    this.s0 = y;
    x ^= (x << 23n) & 0xffffffffffffffffn;
    this.s1 = x ^ y ^ (x >> 17n) ^ (y >> 26n);
    const v = (this.s1 + y) & 0xffffffffffffffffn;
    return Number(v >> 11n) / 9007199254740992; // [0, 1)
  }

  uniform(lo: number, hi: number): number {
    return lo + (hi - lo) * this.next();
  }
}
