import './style.css'
import { createApp } from './app'
import { ServiceClient } from './api'

createApp(document.getElementById('app')!, new ServiceClient(''))
