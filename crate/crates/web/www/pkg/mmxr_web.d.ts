/* tslint:disable */
/* eslint-disable */

/**
 * Horizontal gain cut, azimuth -90° to 90°, elevation 0.
 */
export class Cut {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Degrees.
     */
    azimuth(): Float64Array;
    detail(): string;
    /**
     * Gain of the synthesized pattern, dB.
     */
    primary(): Float64Array;
    /**
     * Gain of the comparison pattern, dB.
     */
    reference(): Float64Array;
}

export class Run {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Cumulative share of all frames at each latency.
     */
    fraction(): Float64Array;
    /**
     * CDF abscissae, milliseconds.
     */
    latency_ms(): Float64Array;
    reliability(): number;
    summary(): string;
}

export function covrage_cut(rows: number, cols: number, yaw_deg: number, k_max: number, points: number): Cut;

export function quasi_omni_cut(rows: number, cols: number, samples: number, seed: bigint, points: number): Cut;

export function run_scenario(config_text: string): Run;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_cut_free: (a: number, b: number) => void;
    readonly __wbg_run_free: (a: number, b: number) => void;
    readonly covrage_cut: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly cut_azimuth: (a: number) => [number, number];
    readonly cut_detail: (a: number) => [number, number];
    readonly cut_primary: (a: number) => [number, number];
    readonly cut_reference: (a: number) => [number, number];
    readonly quasi_omni_cut: (a: number, b: number, c: number, d: bigint, e: number) => [number, number, number];
    readonly run_fraction: (a: number) => [number, number];
    readonly run_latency_ms: (a: number) => [number, number];
    readonly run_reliability: (a: number) => number;
    readonly run_scenario: (a: number, b: number) => [number, number, number];
    readonly run_summary: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
