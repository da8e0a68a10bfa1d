/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_comparison_free: (a: number, b: number) => void;
export const __wbg_gridrun_free: (a: number, b: number) => void;
export const comparison_ctmc: (a: number) => [number, number];
export const comparison_deviation: (a: number) => number;
export const comparison_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const comparison_ode: (a: number) => [number, number];
export const comparison_times: (a: number) => [number, number];
export const densityCurve: (a: number, b: number, c: number) => [number, number, number, number];
export const gridrun_cbdShare: (a: number) => [number, number];
export const gridrun_informedAt: (a: number, b: number) => [number, number];
export const gridrun_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const gridrun_rho: (a: number) => [number, number];
export const gridrun_segmentX: (a: number) => [number, number];
export const gridrun_segmentY: (a: number) => [number, number];
export const gridrun_times: (a: number) => [number, number];
export const gridrun_totalAt: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
