/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_cut_free: (a: number, b: number) => void;
export const __wbg_run_free: (a: number, b: number) => void;
export const covrage_cut: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const cut_azimuth: (a: number) => [number, number];
export const cut_detail: (a: number) => [number, number];
export const cut_primary: (a: number) => [number, number];
export const cut_reference: (a: number) => [number, number];
export const quasi_omni_cut: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number];
export const run_fraction: (a: number) => [number, number];
export const run_latency_ms: (a: number) => [number, number];
export const run_reliability: (a: number) => number;
export const run_scenario: (a: number, b: number) => [number, number, number];
export const run_summary: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
