/* tslint:disable */
/* eslint-disable */

/**
 * Mean of a small CTMC ensemble against the ODE on the same grid.
 */
export class Comparison {
    free(): void;
    [Symbol.dispose](): void;
    ctmc(): Float64Array;
    deviation(): number;
    constructor(avenues: number, gamma: number, beta: number, lambda: number, n: number, runs: number, seed: number, horizon: number);
    ode(): Float64Array;
    times(): Float64Array;
}

/**
 * Fluid solution on a square grid, kept for drawing.
 */
export class GridRun {
    free(): void;
    [Symbol.dispose](): void;
    cbdShare(): Float64Array;
    /**
     * Informed vehicles per segment at sample `i`.
     */
    informedAt(i: number): Float64Array;
    constructor(avenues: number, gamma: number, beta: number, lambda: number, n: number, horizon: number);
    rho(): Float64Array;
    segmentX(): Float64Array;
    segmentY(): Float64Array;
    times(): Float64Array;
    /**
     * All vehicles per segment at sample `i`.
     */
    totalAt(i: number): Float64Array;
}

export function densityCurve(a: number, b: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_comparison_free: (a: number, b: number) => void;
    readonly __wbg_gridrun_free: (a: number, b: number) => void;
    readonly comparison_ctmc: (a: number) => [number, number];
    readonly comparison_deviation: (a: number) => number;
    readonly comparison_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly comparison_ode: (a: number) => [number, number];
    readonly comparison_times: (a: number) => [number, number];
    readonly densityCurve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly gridrun_cbdShare: (a: number) => [number, number];
    readonly gridrun_informedAt: (a: number, b: number) => [number, number];
    readonly gridrun_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly gridrun_rho: (a: number) => [number, number];
    readonly gridrun_segmentX: (a: number) => [number, number];
    readonly gridrun_segmentY: (a: number) => [number, number];
    readonly gridrun_times: (a: number) => [number, number];
    readonly gridrun_totalAt: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
