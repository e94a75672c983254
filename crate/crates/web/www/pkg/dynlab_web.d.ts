/* tslint:disable */
/* eslint-disable */

/**
 * Spanning and separated counts on a full grid for `n = 1..=n_max`.
 */
export class Counts {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly rate: number;
    readonly sep: Uint32Array;
    readonly span: Uint32Array;
}

export function entropyCounts(system: string, grid: number, eps: number, n_max: number): Counts;

export function gammaOffsets(system: string, point: Float64Array, eps: number, horizon: number, grid_res: number, bilateral: boolean): Float64Array;

export function hyperbolicTimes(values: Float64Array, lambda1: number, lambda2: number): Uint32Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_counts_free: (a: number, b: number) => void;
    readonly counts_rate: (a: number) => number;
    readonly counts_sep: (a: number) => [number, number];
    readonly counts_span: (a: number) => [number, number];
    readonly entropyCounts: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly gammaOffsets: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly hyperbolicTimes: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
