/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_act: (a: number, b: number, c: number) => [number, number, number];
export const demo_drift: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_drift_rgba: (a: number) => [number, number];
export const demo_map_rgba: (a: number) => [number, number];
export const demo_map_size: (a: number) => number;
export const demo_new: (a: number) => [number, number, number];
export const demo_place: (a: number, b: number, c: number) => number;
export const demo_view_height: (a: number) => number;
export const demo_view_rgba: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_view_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
