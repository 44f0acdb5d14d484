import { describe, expect, it } from 'vitest';
import { maskPixels, rasterizePolyline, Point } from '../src/raster';
import fixtures from './fixtures/raster.json';

interface Fixture {
    name: string;
    points: number[][];
    brush: number;
    width: number;
    height: number;
    pixels: number[];
}

describe('rasterizePolyline matches the server rasterizer byte for byte', () => {
    for (const fx of fixtures as Fixture[]) {
        it(fx.name, () => {
            const mask = rasterizePolyline(
                fx.points.map(([x, y]) => [x, y] as Point), fx.brush, fx.width, fx.height);
            expect(mask.length).toBe(fx.width * fx.height);
            expect(maskPixels(mask)).toEqual(fx.pixels);
        });
    }

    it('empty polyline yields an empty mask', () => {
        expect(maskPixels(rasterizePolyline([], 4, 32, 32))).toEqual([]);
    });

    it('single point with a wide brush stamps a disc', () => {
        const mask = rasterizePolyline([[10, 10]], 6, 32, 32);
        const pixels = maskPixels(mask);
        expect(pixels.length).toBeGreaterThan(20);
        expect(mask[10 * 32 + 10]).toBe(1);
        expect(mask[0]).toBe(0);
    });
});
