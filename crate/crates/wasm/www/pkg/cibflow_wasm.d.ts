/* tslint:disable */
/* eslint-disable */

/**
 * Succession path from `start` until a fixed point or cycle recurs.
 */
export function explore_attractor(spec: string, start: Uint32Array, max_steps: number): string;

/**
 * Robustness of `scenario` (state indices) at each structural shock scale.
 */
export function robustness_curve(spec: string, scenario: Uint32Array, scales: Float64Array, samples: number, seed: bigint): string;

/**
 * The bundled six-descriptor study, pretty-printed.
 */
export function sample_study(): string;

/**
 * Share of each state of `descriptor` per period over `runs` Monte Carlo
 * runs, with Wilson bands at `level`.
 */
export function share_fan(spec: string, descriptor: string, runs: number, seed: bigint, level: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly explore_attractor: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly robustness_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number, number];
    readonly sample_study: () => [number, number];
    readonly share_fan: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
