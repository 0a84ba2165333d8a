import { defineConfig } from 'vitest/config'

export default defineConfig({
  base: '/ui/',
  build: {
    outDir: 'dist',
    emptyOutDir: true,
  },
  server: {
    proxy: {
      '/registry': 'http://127.0.0.1:8810',
      '/sessions': 'http://127.0.0.1:8810',
    },
  },
  test: {
    environment: 'jsdom',
    testTimeout: 30000,
    hookTimeout: 60000,
  },
})
