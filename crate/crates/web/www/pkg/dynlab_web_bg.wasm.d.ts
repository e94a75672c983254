/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_counts_free: (a: number, b: number) => void;
export const counts_rate: (a: number) => number;
export const counts_sep: (a: number) => [number, number];
export const counts_span: (a: number) => [number, number];
export const entropyCounts: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const gammaOffsets: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const hyperbolicTimes: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
